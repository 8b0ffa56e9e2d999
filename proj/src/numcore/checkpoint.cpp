#include "awml/numcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "awml/common/error.hpp"

namespace awml::num {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const ParamSet& params) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  std::ofstream manifest(with_suffix(stem, ".manifest"));
  std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!manifest || !bin) throw Error("cannot open checkpoint files at " + stem.string());
  manifest << "awml-checkpoint 1\n"
           << "dtype float64\n"
           << "byte_order little\n"
           << "entries " << params.size() << "\n";
  std::size_t offset = 0;
  for (const auto& e : params) {
    manifest << "entry " << e.name << " " << offset << " " << e.value.rank();
    for (auto d : e.value.shape()) manifest << " " << d;
    manifest << "\n";
    bin.write(reinterpret_cast<const char*>(e.value.data()),
              static_cast<std::streamsize>(e.value.size() * sizeof(double)));
    offset += e.value.size();
  }
  if (!manifest || !bin) throw Error("failed writing checkpoint " + stem.string());
}

ParamSet load_checkpoint(const std::filesystem::path& stem) {
  std::ifstream manifest(with_suffix(stem, ".manifest"));
  std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!manifest || !bin) throw Error("cannot open checkpoint files at " + stem.string());
  std::string line, key, value;
  auto expect = [&](const char* k, const std::string& v) {
    if (!std::getline(manifest, line)) throw SchemaError("checkpoint manifest truncated");
    std::istringstream is(line);
    is >> key >> value;
    if (key != k || (!v.empty() && value != v)) throw SchemaError("checkpoint manifest: bad line '" + line + "'");
  };
  expect("awml-checkpoint", "1");
  expect("dtype", "float64");
  expect("byte_order", "little");
  expect("entries", "");
  const std::size_t count = std::stoul(value);

  std::vector<char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  ParamSet out;
  std::size_t expected_offset = 0;
  for (std::size_t k = 0; k < count; ++k) {
    if (!std::getline(manifest, line)) throw SchemaError("checkpoint manifest truncated");
    std::istringstream is(line);
    std::string tag, name;
    std::size_t offset = 0, rank = 0;
    is >> tag >> name >> offset >> rank;
    Shape shape(rank);
    for (auto& d : shape) is >> d;
    if (!is || tag != "entry" || offset != expected_offset) {
      throw SchemaError("checkpoint manifest: bad entry '" + line + "'");
    }
    Tensor t(shape);
    const std::size_t bytes = t.size() * sizeof(double);
    if ((offset * sizeof(double)) + bytes > raw.size()) throw SchemaError("checkpoint data truncated");
    std::memcpy(t.data(), raw.data() + offset * sizeof(double), bytes);
    out.add(name, std::move(t));
    expected_offset += out.tensor(k).size();
  }
  if (expected_offset * sizeof(double) != raw.size()) throw SchemaError("checkpoint data has trailing bytes");
  return out;
}

}  // namespace awml::num
