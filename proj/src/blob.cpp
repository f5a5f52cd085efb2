#include "dynlab/blob.hpp"

#include <bit>
#include <cstring>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <openssl/sha.h>

#include "dynlab/error.hpp"

namespace dynlab {

static_assert(std::endian::native == std::endian::little, "blob encoding assumes a little-endian host");

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::SchemaMismatch, "base64 length is not a multiple of 4");
  std::string out(3 * text.size() / 4 + 1, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw Error(ErrorCode::SchemaMismatch, "invalid base64 payload");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock keeps the bytes produced by '=' padding.
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

nlohmann::json matrix_blob(const Mat& m) {
  const RowMat rm = m;
  const std::string_view bytes(reinterpret_cast<const char*>(rm.data()), sizeof(double) * static_cast<std::size_t>(rm.size()));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"f64le", base64_encode(bytes)}};
}

Mat matrix_from_blob(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const std::string bytes = base64_decode(j.at("f64le").get<std::string>());
  if (rows < 0 || cols < 0 || bytes.size() != sizeof(double) * static_cast<std::size_t>(rows * cols))
    throw Error(ErrorCode::SchemaMismatch, "matrix blob size does not match its shape");
  RowMat rm(rows, cols);
  if (!bytes.empty()) std::memcpy(rm.data(), bytes.data(), bytes.size());
  return rm;
}

nlohmann::json vector_blob(const Vec& v) { return matrix_blob(v); }

Vec vector_from_blob(const nlohmann::json& j) {
  const Mat m = matrix_from_blob(j);
  if (m.cols() != 1) throw Error(ErrorCode::SchemaMismatch, "expected a column vector blob");
  return m.col(0);
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char b : digest) {
    out.push_back(hex[b >> 4]);
    out.push_back(hex[b & 0xF]);
  }
  return out;
}

}  // namespace dynlab
