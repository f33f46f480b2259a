#include "spm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "spm/json_io.hpp"

namespace spm {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoints are written in host order and assume little-endian");

namespace {

constexpr char kMagic[8] = {'S', 'P', 'M', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw std::runtime_error("load_checkpoint: truncated tensors.bin");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& dir, const ArchConfig& arch, const ParamSet<float>& params) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("save_checkpoint: cannot create " + dir + ": " + ec.message());
  std::ofstream bin(fs::path(dir) / "tensors.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("save_checkpoint: cannot write tensors.bin in " + dir);
  json tensors = json::array();
  bin.write(kMagic, sizeof(kMagic));
  put_u32(bin, static_cast<std::uint32_t>(params.size()));
  std::uint64_t offset = sizeof(kMagic) + 4;
  for (const auto& t : params) {
    put_u32(bin, static_cast<std::uint32_t>(t.name.size()));
    bin.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(bin, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(bin, static_cast<std::uint32_t>(d));
    offset += 4 + t.name.size() + 4 + 4 * t.shape.size();
    bin.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"numel", t.numel()}});
    offset += t.numel() * sizeof(float);
  }
  if (!bin) throw std::runtime_error("save_checkpoint: write failed in " + dir);
  std::ofstream man(fs::path(dir) / "manifest.json");
  man << json{{"format", "spm-checkpoint/1"}, {"arch", arch_to_json(arch)}, {"tensors", tensors}}.dump(2)
      << '\n';
  if (!man) throw std::runtime_error("save_checkpoint: cannot write manifest.json in " + dir);
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream man(fs::path(dir) / "manifest.json");
  if (!man) throw std::runtime_error("load_checkpoint: missing manifest.json in " + dir);
  json manifest;
  try {
    manifest = json::parse(man);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("load_checkpoint: corrupt manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "spm-checkpoint/1") {
    throw std::runtime_error("load_checkpoint: unsupported checkpoint format in " + dir);
  }
  Checkpoint ck;
  ck.arch = arch_from_json(manifest.at("arch"));

  std::ifstream bin(fs::path(dir) / "tensors.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("load_checkpoint: missing tensors.bin in " + dir);
  char magic[8];
  bin.read(magic, sizeof(magic));
  if (!bin || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in tensors.bin");
  }
  const std::uint32_t count = get_u32(bin);
  const auto& listed = manifest.at("tensors");
  if (listed.size() != count) throw std::runtime_error("load_checkpoint: manifest/tensor count mismatch");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get_u32(bin), '\0');
    bin.read(name.data(), static_cast<std::streamsize>(name.size()));
    std::vector<int> shape(get_u32(bin));
    for (int& d : shape) d = static_cast<int>(get_u32(bin));
    if (listed[i].at("name").get<std::string>() != name || listed[i].at("shape").get<std::vector<int>>() != shape) {
      throw std::runtime_error("load_checkpoint: manifest disagrees with tensors.bin at " + name);
    }
    auto& t = ck.params.add(name, shape);
    bin.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!bin) throw std::runtime_error("load_checkpoint: truncated payload for " + name);
  }
  const ParamSet<float> expected = init_params<float>(ck.arch, 0);
  if (!expected.congruent(ck.params)) {
    throw std::runtime_error("load_checkpoint: tensors do not match the declared architecture");
  }
  return ck;
}

}  // namespace spm
