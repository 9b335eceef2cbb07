#include "pssl/checkpoint.hpp"

#include <fstream>

#include "binio.hpp"
#include "pssl/errors.hpp"

namespace pssl {

void save_checkpoint(const std::string& path, const ParamSet& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os.write("PSSL", 4);
  binio::put_u32(os, kCheckpointVersion);
  binio::put_u64(os, params.items().size());
  for (const Param& p : params.items()) {
    binio::put_u64(os, p.name.size());
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    binio::put_u64(os, p.value.rank());
    for (std::size_t d : p.value.shape()) binio::put_u64(os, d);
    for (std::size_t i = 0; i < p.value.numel(); ++i) binio::put_f64(os, p.value[i]);
  }
  if (!os) throw DataError("write failed for '" + path + "'");
}

ParamSet read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "' for reading");
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "PSSL")
    throw DataError(path + ": bad checkpoint magic");
  const std::uint32_t version = binio::get_u32(is, path + " version");
  if (version != kCheckpointVersion)
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t count = binio::get_u64(is, path + " parameter count");

  ParamSet set;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = binio::get_u64(is, path + " name length");
    if (name_len > (1u << 20)) throw DataError(path + ": implausible name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name_len)))
      throw DataError(path + ": truncated parameter name");
    const std::uint64_t rank = binio::get_u64(is, path + " rank");
    if (rank > 8) throw DataError(path + ": implausible rank");
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<std::size_t>(binio::get_u64(is, path + " dim"));
      numel *= shape[d];
    }
    if (numel > (std::size_t{1} << 31)) throw DataError(path + ": implausible tensor size");
    Tensor value(shape);
    for (std::size_t j = 0; j < numel; ++j) value[j] = binio::get_f64(is, path + " data");
    set.add(std::move(name), std::move(value));
  }
  return set;
}

void load_checkpoint(const std::string& path, ParamSet& params) {
  ParamSet loaded = read_checkpoint(path);
  if (loaded.items().size() != params.items().size())
    throw DataError(path + ": checkpoint holds " + std::to_string(loaded.items().size()) +
                    " parameters, model expects " + std::to_string(params.items().size()));
  for (Param& p : params.items()) {
    if (!loaded.has(p.name)) throw DataError(path + ": missing parameter '" + p.name + "'");
    Param& src = loaded.at(p.name);
    if (!src.value.same_shape(p.value))
      throw DataError(path + ": shape mismatch for '" + p.name + "' (" +
                      src.value.shape_str() + " vs " + p.value.shape_str() + ")");
    p.value = std::move(src.value);
  }
}

}  // namespace pssl
