#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace lrc {

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data);

}  // namespace lrc
