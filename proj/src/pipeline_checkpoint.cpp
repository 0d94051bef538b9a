#include <cstring>
#include <fstream>

#include "zenfoley/pipeline.hpp"

namespace zenfoley::pipeline {

namespace {

void write_u32le(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 4);
}

void write_u64le(std::ostream& out, uint64_t v) {
  write_u32le(out, static_cast<uint32_t>(v & 0xffffffffULL));
  write_u32le(out, static_cast<uint32_t>(v >> 32));
}

uint32_t read_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t read_u64le(std::istream& in) {
  uint64_t lo = read_u32le(in);
  uint64_t hi = read_u32le(in);
  return lo | (hi << 32);
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write("ZFCK", 4);
  write_u32le(out, version);
  write_u64le(out, config_hash);
  write_u64le(out, step);
  write_u32le(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    write_u32le(out, static_cast<uint32_t>(nt.name.size()));
    out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    write_u32le(out, static_cast<uint32_t>(nt.t.rank()));
    for (int i = 0; i < nt.t.rank(); ++i)
      write_u32le(out, static_cast<uint32_t>(nt.t.dim(i)));
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(nt.t.values().data()),
              static_cast<std::streamsize>(nt.t.size() * 4));
  }
  if (!out) throw IoError("short write to checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "ZFCK", 4) != 0)
    throw FormatError("checkpoint magic mismatch in " + path);
  Checkpoint ck;
  ck.version = read_u32le(in);
  if (ck.version != 1)
    throw VersioningError("checkpoint version " + std::to_string(ck.version) +
                          " unsupported in " + path);
  ck.config_hash = read_u64le(in);
  ck.step = read_u64le(in);
  uint32_t count = read_u32le(in);
  if (!in) throw FormatError("checkpoint header truncated in " + path);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = read_u32le(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint32_t ndims = read_u32le(in);
    Shape shape(ndims);
    for (uint32_t d = 0; d < ndims; ++d)
      shape[d] = static_cast<int64_t>(read_u32le(in));
    if (!in) throw FormatError("checkpoint tensor header truncated in " + path);
    std::vector<float> vals(static_cast<size_t>(numel(shape)));
    in.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(vals.size() * 4));
    if (static_cast<size_t>(in.gcount()) != vals.size() * 4)
      throw FormatError("checkpoint tensor '" + name + "' truncated in " + path);
    ck.tensors.push_back({std::move(name),
                          Tensor::from_values(std::move(shape), std::move(vals))});
  }
  return ck;
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& nt : tensors)
    if (nt.name == name) return &nt.t;
  return nullptr;
}

void load_parameters(std::vector<NamedTensor>& params, const Checkpoint& ck) {
  for (auto& p : params) {
    const Tensor* src = ck.find(p.name);
    if (!src)
      throw VersioningError("checkpoint missing tensor '" + p.name + "'");
    if (src->shape() != p.t.shape())
      throw VersioningError("checkpoint tensor '" + p.name + "' shape " +
                            shape_str(src->shape()) + " != model shape " +
                            shape_str(p.t.shape()));
    auto dst = p.t.values_mut();
    std::copy(src->values().begin(), src->values().end(), dst.begin());
  }
}

}  // namespace zenfoley::pipeline
