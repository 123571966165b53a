#include "lexsimp/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <memory>
#include <unordered_map>

#include "lexsimp/errors.hpp"

namespace lexsimp {

namespace {

constexpr std::array<char, 8> kMagic = {'L', 'X', 'S', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("truncated checkpoint: " + path);
  return v;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md, &len);
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += digits[md[i] >> 4];
      out += digits[md[i] & 0xF];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                      const std::vector<const nn::Parameter*>& params) {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto* p : params) {
    header["tensors"].push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  const std::string text = header.dump();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw LoadError("cannot write checkpoint: " + path.string());
    out.write(kMagic.data(), kMagic.size());
    write_pod(out, kCheckpointVersion);
    write_pod(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* p : params) {
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
    if (!out) throw LoadError("failed writing checkpoint: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint: " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("not a checkpoint: " + path.string());
  Checkpoint ckpt;
  ckpt.version = read_pod<std::uint32_t>(in, path.string());
  if (ckpt.version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(ckpt.version) + " in " + path.string());
  }
  const auto len = read_pod<std::uint64_t>(in, path.string());
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  ckpt.meta = header.at("meta");
  for (const auto& t : header.at("tensors")) {
    nn::Matrix m(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
    if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)))) {
      throw FormatError("truncated tensor data in " + path.string());
    }
    ckpt.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  return ckpt;
}

void assign_parameters(const Checkpoint& ckpt, const std::vector<nn::Parameter*>& params) {
  std::unordered_map<std::string, const nn::Matrix*> by_name;
  for (const auto& [name, m] : ckpt.tensors) by_name[name] = &m;
  for (auto* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks tensor " + p->name);
    if (it->second->rows() != p->value.rows() || it->second->cols() != p->value.cols()) {
      throw FormatError("checkpoint tensor " + p->name + " has the wrong shape");
    }
    p->value = *it->second;
  }
}

std::string parameter_digest(const std::vector<const nn::Parameter*>& params) {
  Sha256 sha;
  for (const auto* p : params) {
    sha.update(p->name.data(), p->name.size());
    const std::int64_t shape[2] = {p->value.rows(), p->value.cols()};
    sha.update(shape, sizeof(shape));
    sha.update(p->value.data(), static_cast<std::size_t>(p->value.size()) * sizeof(double));
  }
  return sha.hex();
}

std::string sha256_hex(std::string_view bytes) {
  Sha256 sha;
  sha.update(bytes.data(), bytes.size());
  return sha.hex();
}

}  // namespace lexsimp
