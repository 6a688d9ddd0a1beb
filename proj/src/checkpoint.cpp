#include "mantra/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "mantra/errors.hpp"

namespace mantra {

namespace {

constexpr char kMagic[4] = {'M', 'N', 'T', 'R'};

template <typename T>
void put(std::vector<char>& out, T v) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(v);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(bits);
    } else {
      return static_cast<T>(bits);
    }
  }

  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(path_ + ": corrupt payload, truncated while reading " + what + " at byte " +
                            std::to_string(pos_));
    }
  }

  std::vector<char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

Reader open_checked(const std::string& path, std::string* config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}), path);
  if (r.text(4, "magic") != std::string(kMagic, 4)) throw CheckpointError(path + ": not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(path + ": checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const auto len = r.get<std::uint32_t>("config length");
  *config = r.text(len, "config");
  return r;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& config_json, std::span<Parameter* const> params) {
  std::vector<char> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(config_json.size()));
  out.insert(out.end(), config_json.begin(), config_json.end());
  for (const Parameter* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.insert(out.end(), p->name.begin(), p->name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) put<std::uint64_t>(out, d);
    for (double v : p->value.data()) put<double>(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write checkpoint '" + path + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ConfigError("failed writing checkpoint '" + path + "'");
}

std::string read_checkpoint_config(const std::string& path) {
  std::string config;
  open_checked(path, &config);
  return config;
}

void load_checkpoint(const std::string& path, std::span<Parameter* const> params) {
  std::string config;
  Reader r = open_checked(path, &config);
  std::vector<Tensor> values;
  values.reserve(params.size());
  for (const Parameter* p : params) {
    const auto name_len = r.get<std::uint32_t>("name length");
    const std::string name = r.text(name_len, "parameter name");
    if (name != p->name) throw CheckpointError(path + ": expected parameter '" + p->name + "', found '" + name + "'");
    const auto rank = r.get<std::uint32_t>("rank");
    Shape shape(rank);
    for (std::size_t& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>("dims"));
    if (shape != p->value.shape()) {
      throw CheckpointError(path + ": parameter '" + name + "' has shape " + shape_string(shape) + ", expected " +
                            shape_string(p->value.shape()));
    }
    Tensor t(shape);
    for (double& v : t.data()) v = r.get<double>("values");
    values.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError(path + ": corrupt payload, trailing bytes after the last parameter");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = std::move(values[i]);
}

}  // namespace mantra
