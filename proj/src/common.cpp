#include "zenfoley/common.hpp"

#include <array>

namespace zenfoley {

uint64_t fnv1a64(std::string_view text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const char* category_name(int id) {
  static const std::array<const char*, kNumCategories> names = {
      "DogBark",  "Footstep", "GunShot",     "Keyboard",
      "MovingMotorVehicle", "Rain", "Sneeze/Cough"};
  if (id < 0 || id >= kNumCategories)
    throw ContractError("category id out of range: " + std::to_string(id));
  return names[static_cast<size_t>(id)];
}

}  // namespace zenfoley
