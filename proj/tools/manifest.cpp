#include "manifest.hpp"

#include <array>
#include <cstdio>
#include <memory>

#include <openssl/evp.h>

#include "simnet/error.hpp"
#include "simnet/io.hpp"

namespace simnet::cli {

std::string sha256_hex(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw Error("sha256 failed for " + path.string());
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

Manifest::Manifest(std::string command) {
  doc_["command"] = std::move(command);
  doc_["config"] = nlohmann::ordered_json::object();
  doc_["seeds"] = nlohmann::ordered_json::object();
  doc_["inputs"] = nlohmann::ordered_json::object();
  doc_["outputs"] = nlohmann::ordered_json::object();
}

void Manifest::input(const std::string& role, const std::filesystem::path& path) {
  doc_["inputs"][role] = {{"path", path.string()}, {"sha256", sha256_hex(path)}};
}

void Manifest::output(const std::string& role, const std::filesystem::path& path) {
  doc_["outputs"][role] = {{"path", path.string()}, {"sha256", sha256_hex(path)}};
}

void Manifest::write(const std::filesystem::path& path) const {
  const std::string text = dump();
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::filesystem::path manifest_path_for(const std::filesystem::path& artifact) {
  auto p = artifact;
  p += ".manifest.json";
  return p;
}

}  // namespace simnet::cli
