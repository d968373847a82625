#include "canseg/weights.hpp"

#include <cstdio>
#include <cstring>
#include <map>
#include <sstream>
#include <stdexcept>

namespace canseg::nn {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'N', 'S', 'E', 'G', 'W', 'T'};
constexpr std::uint32_t kVersion = 1;

struct File {
  FILE* f;
  explicit File(FILE* h) : f(h) {}
  ~File() {
    if (f) std::fclose(f);
  }
};

void put_u32(FILE* f, std::uint32_t v) {
  if (std::fwrite(&v, 4, 1, f) != 1) throw std::runtime_error("weights: write failed");
}

std::uint32_t get_u32(FILE* f) {
  std::uint32_t v;
  if (std::fread(&v, 4, 1, f) != 1) throw std::runtime_error("weights: truncated archive");
  return v;
}

}  // namespace

void save_weights(const ParamSet& params, const std::string& path) {
  File file(std::fopen(path.c_str(), "wb"));
  if (!file.f) throw std::runtime_error("weights: cannot write " + path);
  FILE* f = file.f;
  if (std::fwrite(kMagic, 1, 8, f) != 8) throw std::runtime_error("weights: write failed");
  put_u32(f, kVersion);
  put_u32(f, std::uint32_t(params.items.size()));
  for (const auto& [name, p] : params.items) {
    put_u32(f, std::uint32_t(name.size()));
    if (std::fwrite(name.data(), 1, name.size(), f) != name.size())
      throw std::runtime_error("weights: write failed");
    put_u32(f, std::uint32_t(p->shape.size()));
    for (int d : p->shape) put_u32(f, std::uint32_t(d));
    if (std::fwrite(p->value.data(), 4, p->value.size(), f) != p->value.size())
      throw std::runtime_error("weights: write failed");
  }
}

void load_weights(ParamSet& params, const std::string& path) {
  File file(std::fopen(path.c_str(), "rb"));
  if (!file.f) throw std::runtime_error("weights: cannot open " + path);
  FILE* f = file.f;
  char magic[8];
  if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("weights: not a weights archive: " + path);
  if (get_u32(f) != kVersion) throw std::runtime_error("weights: unsupported version in " + path);

  std::map<std::string, NodePtr> by_name;
  for (auto& [name, p] : params.items) by_name[name] = p;

  const std::uint32_t count = get_u32(f);
  if (count != params.items.size())
    throw std::runtime_error("weights: archive holds " + std::to_string(count) +
                             " tensors, model expects " + std::to_string(params.items.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get_u32(f), '\0');
    if (!name.empty() && std::fread(name.data(), 1, name.size(), f) != name.size())
      throw std::runtime_error("weights: truncated archive");
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("weights: archive tensor '" + name + "' not in model");
    Shape shape(get_u32(f));
    for (auto& d : shape) d = int(get_u32(f));
    if (shape != it->second->shape)
      throw std::runtime_error("weights: shape mismatch for tensor '" + name + "'");
    if (std::fread(it->second->value.data(), 4, it->second->value.size(), f) !=
        it->second->value.size())
      throw std::runtime_error("weights: truncated archive");
  }
}

std::string summarize(const ParamSet& params) {
  std::ostringstream os;
  for (const auto& [name, p] : params.items) {
    os << name << "  (";
    for (std::size_t i = 0; i < p->shape.size(); ++i) os << (i ? "," : "") << p->shape[i];
    os << ")  " << p->value.size() << "\n";
  }
  os << "total parameters: " << params.scalar_count() << "\n";
  return os.str();
}

}  // namespace canseg::nn
