#include "storyplan/nn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "storyplan/errors.hpp"

namespace storyplan::nn {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'P', 'C', 'K', 'P', 'T', '\0', '\1'};

template <typename T>
void put(std::ostream& out, T v) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(v);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw ValidationError("checkpoint truncated");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<double>(bits);
  } else {
    return static_cast<T>(bits);
  }
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.values()) put<double>(out, v);
  }
  if (!out) throw ValidationError("failed writing checkpoint " + path.string());
}

NamedTensors read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw ValidationError("not a checkpoint: " + path.string());
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  const auto count = get<std::uint32_t>(in);
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw ValidationError("checkpoint truncated");
    const auto ndim = get<std::uint32_t>(in);
    std::vector<std::size_t> shape;
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(in)));
      total *= shape.back();
    }
    std::vector<double> values(total);
    for (auto& v : values) v = get<double>(in);
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void save_parameters(const std::filesystem::path& path, const ParameterSet& params) {
  NamedTensors tensors;
  for (std::size_t i = 0; i < params.size(); ++i) tensors.emplace_back(params[i].name, params[i].value);
  write_checkpoint(path, tensors);
}

void load_parameters(const std::filesystem::path& path, ParameterSet& params) {
  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : read_checkpoint(path)) by_name.emplace(std::move(name), std::move(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = by_name.find(params[i].name);
    if (it == by_name.end()) throw ValidationError("checkpoint lacks parameter " + params[i].name);
    if (it->second.shape() != params[i].value.shape()) {
      throw ValidationError("checkpoint shape mismatch for " + params[i].name);
    }
    params[i].value = it->second;
    params[i].zero_grad();
  }
}

}  // namespace storyplan::nn
