#include "diffurec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "diffurec/errors.hpp"

namespace diffurec {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'F', 'R', 'E', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const { return bytes_.size() - pos_ >= n; }

  template <class T>
  T get(const std::string& context) {
    if (!has(sizeof(T))) throw CheckpointTruncatedError("checkpoint truncated while reading " + context, context);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string take(std::size_t n, const std::string& context) {
    if (!has(n)) throw CheckpointTruncatedError("checkpoint truncated while reading " + context, context);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void read_doubles(double* dst, std::size_t n, const std::string& tensor) {
    if (n > (bytes_.size() - pos_) / sizeof(double))
      throw CheckpointTruncatedError("checkpoint truncated inside tensor '" + tensor + "'", tensor);
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ModelCheckpoint& ckpt) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, ModelCheckpoint::kFormatVersion);
  std::string meta = ckpt.config.serialize();
  meta += "n_items = " + std::to_string(ckpt.n_items) + "\n";
  meta += "epoch = " + std::to_string(ckpt.epoch) + "\n";
  put<std::uint64_t>(out, meta.size());
  out += meta;

  const auto named = ckpt.params.named();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape()) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t->data().data()), t->size() * sizeof(double));
  }
  return out;
}

ModelCheckpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointFormatError("not a checkpoint file (bad magic)");
  Reader in(bytes);
  in.take(sizeof kMagic, "magic");
  const auto version = in.get<std::uint32_t>("version");
  if (version != ModelCheckpoint::kFormatVersion)
    throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                 std::to_string(ModelCheckpoint::kFormatVersion) + ")");
  const auto meta_len = in.get<std::uint64_t>("metadata length");
  const std::string meta = in.take(meta_len, "metadata");

  ModelCheckpoint ckpt;
  std::string config_text;
  bool have_items = false, have_epoch = false;
  {
    std::istringstream lines(meta);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.rfind("n_items = ", 0) == 0) {
        ckpt.n_items = std::stoi(line.substr(10));
        have_items = true;
      } else if (line.rfind("epoch = ", 0) == 0) {
        ckpt.epoch = std::stoi(line.substr(8));
        have_epoch = true;
      } else {
        config_text += line + "\n";
      }
    }
  }
  if (!have_items || !have_epoch) throw CheckpointFormatError("checkpoint metadata lacks n_items or epoch");
  try {
    ckpt.config = TrainConfig::parse(config_text);
  } catch (const ConfigError& e) {
    throw CheckpointFormatError(std::string("checkpoint metadata: ") + e.what());
  }

  // Build a correctly shaped parameter set, then overwrite every tensor.
  Rng scratch(0);
  ckpt.params = ApproximatorParams::init(ckpt.config.approximator(ckpt.n_items), scratch);
  auto expected = ckpt.params.named();

  const auto count = in.get<std::uint32_t>("tensor count");
  if (count != expected.size())
    throw CheckpointShapeError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                               std::to_string(expected.size()));
  for (auto& [name, t] : expected) {
    const auto name_len = in.get<std::uint32_t>(name);
    const std::string stored = in.take(name_len, name);
    if (stored != name) throw CheckpointShapeError("expected tensor '" + name + "', found '" + stored + "'");
    const auto rank = in.get<std::uint32_t>(name);
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>(name)));
    if (shape != t->shape())
      throw CheckpointShapeError("tensor '" + name + "' has shape " + shape_string(shape) + ", config implies " +
                                 shape_string(t->shape()));
    in.read_doubles(t->data().data(), t->size(), name);
  }
  if (!in.done()) throw CheckpointFormatError("trailing bytes after the tensor table");
  return ckpt;
}

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::string& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace diffurec
