#pragma once

#include <string>
#include <string_view>

namespace templar {

// SHA-256 hex digest (lowercase).
std::string sha256_hex(std::string_view data);

}  // namespace templar
