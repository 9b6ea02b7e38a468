#include "din/checkpoint.hpp"

#include <limits>

#include "din/config.hpp"
#include "din/error.hpp"
#include "din/io_util.hpp"

namespace din {

namespace {

void put_tensor(io::ByteWriter& w, const std::string& name, const Tensor& t) {
  if (name.size() > std::numeric_limits<std::uint16_t>::max())
    throw UsageError("checkpoint: tensor name too long");
  w.put_u16(static_cast<std::uint16_t>(name.size()));
  w.put_bytes(name);
  w.put_u8(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) w.put_u32(static_cast<std::uint32_t>(d));
  for (double v : t.values()) w.put_f32(static_cast<float>(v));
}

bool is_extra(std::string_view name) { return name.starts_with("state."); }

}  // namespace

std::string encode_checkpoint(const DinNetwork& net, const std::map<std::string, Tensor>& extras) {
  const ParameterStore& store = net.params();
  for (const auto& [name, t] : extras)
    if (!is_extra(name)) throw UsageError("checkpoint: extra tensor '" + name + "' must start with state.");
  io::ByteWriter w;
  w.put_bytes("DINC");
  w.put_u32(kCheckpointVersion);
  w.put_u32(static_cast<std::uint32_t>(store.size() + extras.size()));
  for (std::size_t i = 0; i < store.size(); ++i) put_tensor(w, store[i].name, store[i].value);
  for (const auto& [name, t] : extras) put_tensor(w, name, t);
  const std::string cfg = model_config_to_json(net.config());
  w.put_u32(static_cast<std::uint32_t>(cfg.size()));
  w.put_bytes(cfg);
  return w.bytes();
}

LoadedCheckpoint decode_checkpoint(std::string_view bytes) {
  io::ByteReader r(bytes, "checkpoint");
  if (r.get_bytes(4) != "DINC") throw DataError("checkpoint: bad magic");
  if (r.get_u32() != kCheckpointVersion) throw DataError("checkpoint: unsupported version");
  const std::uint32_t count = r.get_u32();
  std::vector<std::pair<std::string, Tensor>> tensors;
  tensors.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name(r.get_bytes(r.get_u16()));
    const std::size_t rank = r.get_u8();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = r.get_u32();
    Tensor t(shape);
    if (t.size() * 4 > r.remaining()) throw DataError("checkpoint: truncated tensor " + name);
    for (auto& v : t.values()) v = r.get_f32();
    tensors.emplace_back(std::move(name), std::move(t));
  }
  const std::uint32_t cfg_len = r.get_u32();
  const DinConfig cfg = parse_model_config(r.get_bytes(cfg_len));
  if (r.remaining() != 0) throw DataError("checkpoint: trailing bytes");

  bool entropy = false;
  for (const auto& [name, t] : tensors)
    if (name.starts_with("head.entropy.")) entropy = true;
  LoadedCheckpoint out;
  out.net = std::make_unique<DinNetwork>(cfg, entropy ? HeadSet::kEntropy : HeadSet::kStage1, 0);
  ParameterStore& store = out.net->params();
  std::size_t matched = 0;
  for (auto& [name, t] : tensors) {
    if (is_extra(name)) {
      out.extras.emplace(name, std::move(t));
      continue;
    }
    if (!store.contains(name)) throw DataError("checkpoint: unexpected tensor " + name);
    Parameter& p = store.get(name);
    if (p.value.shape() != t.shape())
      throw DataError("checkpoint: tensor " + name + " has shape " + t.shape_string() +
                      ", model expects " + p.value.shape_string());
    p.value = std::move(t);
    ++matched;
  }
  if (matched != store.size())
    throw DataError("checkpoint: " + std::to_string(store.size() - matched) +
                    " model tensors missing");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const DinNetwork& net,
                     const std::map<std::string, Tensor>& extras) {
  io::atomic_write(path, encode_checkpoint(net, extras));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace din
