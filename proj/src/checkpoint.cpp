#include "oens/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace oens {

namespace {

constexpr char kMagic[5] = {'O', 'E', 'N', 'S', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw IoError("truncated checkpoint: " + path);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes[i]} << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw IoError("truncated checkpoint: " + path);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes[i]} << (8 * i);
  return v;
}

std::string read_string(std::istream& in, std::uint32_t len, const std::string& path) {
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw IoError("truncated checkpoint: " + path);
  return s;
}

}  // namespace

void save_ensemble(const Ensemble& ensemble, const std::string& path) {
  ensemble.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, static_cast<std::uint32_t>(ensemble.member_count()));
  for (const EnsembleMember& member : ensemble.members) {
    write_u64(out, member.spec.digest());
    const std::string canonical = member.spec.canonical();
    write_u32(out, static_cast<std::uint32_t>(canonical.size()));
    out.write(canonical.data(), static_cast<std::streamsize>(canonical.size()));
    write_u32(out, static_cast<std::uint32_t>(member.params.values.size()));
    for (std::size_t t = 0; t < member.params.values.size(); ++t) {
      const std::string& name = member.params.names[t];
      write_u32(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      const Tensor& tensor = member.params.values[t];
      write_u32(out, static_cast<std::uint32_t>(tensor.shape.size()));
      for (std::size_t d : tensor.shape) write_u64(out, d);
      for (double v : tensor.data) write_f64(out, v);
    }
  }
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

Ensemble load_ensemble(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[5];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("bad checkpoint magic in " + path + " (expected OENS1)");
  }
  const std::uint32_t member_count = read_u32(in, path);
  if (member_count == 0) throw IoError("checkpoint holds no members: " + path);

  Ensemble ensemble;
  for (std::uint32_t m = 0; m < member_count; ++m) {
    const std::uint64_t digest = read_u64(in, path);
    const std::uint32_t spec_len = read_u32(in, path);
    const std::string canonical = read_string(in, spec_len, path);
    NetworkSpec spec = NetworkSpec::parse(canonical);
    if (spec.digest() != digest) {
      throw IoError("checkpoint spec digest mismatch in " + path);
    }
    // Reference layout for shape validation; loaded values overwrite it.
    ParameterSet params = init_params(spec, 0);
    const std::uint32_t tensor_count = read_u32(in, path);
    if (tensor_count != params.values.size()) {
      throw IoError("checkpoint tensor count does not match spec in " + path);
    }
    for (std::uint32_t t = 0; t < tensor_count; ++t) {
      const std::uint32_t name_len = read_u32(in, path);
      const std::string name = read_string(in, name_len, path);
      if (name != params.names[t]) {
        throw IoError("checkpoint tensor '" + name + "' does not match spec layout in " + path);
      }
      const std::uint32_t rank = read_u32(in, path);
      std::vector<std::size_t> shape(rank);
      for (std::uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<std::size_t>(read_u64(in, path));
      if (shape != params.values[t].shape) {
        throw IoError("checkpoint tensor shape mismatch for '" + name + "' in " + path);
      }
      for (double& v : params.values[t].data) {
        v = std::bit_cast<double>(read_u64(in, path));
      }
      params.momentum[t] = Tensor::zeros(shape);
    }
    params.revision = 0;
    ensemble.members.push_back({std::move(spec), std::move(params)});
  }
  ensemble.validate();
  return ensemble;
}

}  // namespace oens
