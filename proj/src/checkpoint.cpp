#include "sclap/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sclap {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[6] = {'S', 'C', 'L', 'A', 'P', '1'};

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const ParamSet& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  for (std::size_t i = 0; i < params.params.size(); ++i) {
    const std::string& name = params.names[i];
    const Tensor& t = params.params[i];
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data->data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failure on " + path);
}

ParamSet load_checkpoint(const std::string& path, ParamSet* expect) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[6];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  ParamSet fresh;
  std::size_t record = 0;
  while (true) {
    std::uint32_t name_len;
    is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (is.eof()) break;
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = read_pod<std::uint32_t>(is);
    std::vector<int> shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<int>(read_pod<std::uint64_t>(is));
      numel *= static_cast<std::size_t>(shape[i]);
    }
    std::vector<double> values(numel);
    is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(numel * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated data for " + name);

    if (expect) {
      if (record >= expect->params.size() || expect->names[record] != name ||
          expect->params[record].shape != shape) {
        throw std::runtime_error("checkpoint: record '" + name + "' does not match the expected parameter set");
      }
      *expect->params[record].data = std::move(values);
    } else {
      fresh.add(name, Tensor::from(std::move(values), shape, true));
    }
    ++record;
  }
  if (expect) {
    if (record != expect->params.size()) {
      throw std::runtime_error("checkpoint: " + std::to_string(record) + " records, expected " +
                               std::to_string(expect->params.size()));
    }
    return *expect;
  }
  return fresh;
}

}  // namespace sclap
