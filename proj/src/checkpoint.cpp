#include "acblstm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "acblstm/errors.hpp"

namespace acblstm {

namespace {

constexpr const char* kMagic = "ACBLSTM-CHECKPOINT";

void write_le_doubles(std::ostream& os, const std::vector<double>& v) {
  for (double d : v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(bytes, 8);
  }
}

std::vector<double> read_le_doubles(std::istream& is, std::size_t count) {
  std::vector<double> v(count);
  for (std::size_t j = 0; j < count; ++j) {
    char bytes[8];
    if (!is.read(bytes, 8)) throw parse_error("checkpoint: truncated tensor payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    v[j] = std::bit_cast<double>(bits);
  }
  return v;
}

std::string expect_line(std::istream& is, const std::string& context) {
  std::string line;
  if (!std::getline(is, line)) throw parse_error("checkpoint: truncated at " + context);
  return line;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw config_error("cannot write checkpoint: " + path);
  os << kMagic << " v" << data.version << "\n";
  os << "config " << data.config.size() << "\n";
  for (const auto& [key, value] : data.config) os << key << " = " << value << "\n";
  os << "rng " << data.rng_state << "\n";
  os << "vocab " << data.vocab.size() << "\n";
  for (const std::string& tok : data.vocab) os << tok << "\n";
  os << "tensors " << data.tensors.size() << "\n";
  for (const NamedTensor& nt : data.tensors) {
    os << "tensor " << nt.name << " " << nt.tensor.rank();
    for (int d : nt.tensor.shape()) os << " " << d;
    os << "\n";
    write_le_doubles(os, nt.tensor.values());
    os << "\n";
  }
  os << "end\n";
  if (!os) throw config_error("write failure on checkpoint: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw config_error("cannot open checkpoint: " + path);
  CheckpointData data;

  std::string line = expect_line(is, "header");
  {
    std::istringstream hs(line);
    std::string magic, ver;
    hs >> magic >> ver;
    if (magic != kMagic || ver.size() < 2 || ver[0] != 'v')
      throw parse_error("not an acblstm checkpoint: " + path);
    data.version = std::stoi(ver.substr(1));
    if (data.version != 1)
      throw parse_error("unsupported checkpoint version " + std::to_string(data.version));
  }

  line = expect_line(is, "config header");
  std::size_t config_count = 0;
  if (std::sscanf(line.c_str(), "config %zu", &config_count) != 1)
    throw parse_error("checkpoint: malformed config header");
  for (std::size_t i = 0; i < config_count; ++i) {
    line = expect_line(is, "config entry");
    const std::size_t eq = line.find(" = ");
    if (eq == std::string::npos) throw parse_error("checkpoint: malformed config entry " + line);
    data.config.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }

  line = expect_line(is, "rng state");
  if (line.rfind("rng ", 0) != 0) throw parse_error("checkpoint: missing rng record");
  data.rng_state = line.substr(4);

  line = expect_line(is, "vocab header");
  std::size_t vocab_count = 0;
  if (std::sscanf(line.c_str(), "vocab %zu", &vocab_count) != 1)
    throw parse_error("checkpoint: malformed vocab header");
  data.vocab.reserve(vocab_count);
  for (std::size_t i = 0; i < vocab_count; ++i)
    data.vocab.push_back(expect_line(is, "vocab token"));

  line = expect_line(is, "tensor count");
  std::size_t tensor_count = 0;
  if (std::sscanf(line.c_str(), "tensors %zu", &tensor_count) != 1)
    throw parse_error("checkpoint: malformed tensor count");
  for (std::size_t i = 0; i < tensor_count; ++i) {
    line = expect_line(is, "tensor header");
    std::istringstream ts(line);
    std::string tag, name;
    int rank = 0;
    if (!(ts >> tag >> name >> rank) || tag != "tensor" || rank < 1)
      throw parse_error("checkpoint: malformed tensor header " + line);
    std::vector<int> shape(static_cast<std::size_t>(rank));
    std::size_t count = 1;
    for (int d = 0; d < rank; ++d) {
      if (!(ts >> shape[static_cast<std::size_t>(d)]) || shape[static_cast<std::size_t>(d)] < 1)
        throw parse_error("checkpoint: malformed tensor shape in " + line);
      count *= static_cast<std::size_t>(shape[static_cast<std::size_t>(d)]);
    }
    std::vector<double> values = read_le_doubles(is, count);
    expect_line(is, "tensor payload terminator");
    data.tensors.push_back({name, Tensor::from_data(shape, std::move(values))});
  }

  line = expect_line(is, "trailer");
  if (line != "end") throw parse_error("checkpoint: missing end marker");
  return data;
}

}  // namespace acblstm
