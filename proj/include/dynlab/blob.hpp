#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dynlab/types.hpp"

namespace dynlab {

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

// {"rows": r, "cols": c, "f64le": <base64 of row-major little-endian doubles>}
nlohmann::json matrix_blob(const Mat& m);
Mat matrix_from_blob(const nlohmann::json& j);
nlohmann::json vector_blob(const Vec& v);
Vec vector_from_blob(const nlohmann::json& j);

std::string sha256_hex(std::string_view bytes);

}  // namespace dynlab
