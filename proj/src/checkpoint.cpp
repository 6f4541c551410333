#include "drnet/checkpoint.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "drnet/error.hpp"

namespace drnet {
namespace {

constexpr char kMagic[6] = {'D', 'R', 'N', 'E', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint8_t byte() {
    need(1);
    return bytes_[pos_++];
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint is truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const NetworkParams<float>& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kCheckpointVersion);
  for (const auto& [name, tensor] : params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape().dims()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

NetworkParams<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw DataError("not a DRNET1 checkpoint");
  if (const std::uint8_t version = r.byte(); version != kCheckpointVersion)
    throw DataError(fmt::format("unsupported checkpoint version {}", version));
  NetworkParams<float> params;
  while (!r.done()) {
    const std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw DataError(fmt::format("checkpoint tensor '{}' has invalid rank {}", name, rank));
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) {
      d = r.u32();
      if (d == 0) throw DataError(fmt::format("checkpoint tensor '{}' has a zero dimension", name));
    }
    Shape shape(dims);
    std::vector<float> data(shape.numel());
    for (auto& v : data) v = std::bit_cast<float>(r.u32());
    if (params.contains(name)) throw DataError("checkpoint repeats tensor '" + name + "'");
    params.add(name, Tensor<float>(shape, std::move(data)));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkParams<float>& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

NetworkParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace drnet
