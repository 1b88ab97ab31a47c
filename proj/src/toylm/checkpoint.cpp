#include "selfcon/toylm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "json.hpp"
#include "selfcon/core/error.hpp"
#include "selfcon/core/numeric_text.hpp"

namespace selfcon::toylm {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace {

json tensor_table(const ParamLayout& layout, const std::string& section) {
  json out = json::array();
  for (const auto& e : layout.entries()) {
    out.push_back({{"name", e.name}, {"rows", e.rows}, {"cols", e.cols}, {"offset", e.offset}, {"section", section}});
  }
  return out;
}

void append_doubles(std::string& out, const std::vector<double>& values) {
  const auto* bytes = reinterpret_cast<const char*>(values.data());
  out.append(bytes, values.size() * sizeof(double));
}

}  // namespace

void save_checkpoint(const ToyModelState& state, const std::filesystem::path& path) {
  const ToyConfig& c = state.config;
  json header;
  header["config"] = {{"layers", c.layers},   {"width", c.width},     {"heads", c.heads},
                      {"vocab", c.vocab},     {"context", c.context}, {"mlp_hidden", c.mlp_hidden},
                      {"rms_eps", c.rms_eps}};
  header["tensors"] = tensor_table(state.layout, "base");
  header["base_count"] = state.base.size();
  header["seeds"] = state.seeds;
  if (state.adapter) {
    header["adapter"] = {{"rank", state.adapter->rank},
                         {"alpha", state.adapter->alpha},
                         {"count", state.adapter->params.size()},
                         {"tensors", tensor_table(state.adapter->layout, "adapter")}};
  }
  std::string out = std::string(kCheckpointMagic) + "\n" + header.dump() + "\n";
  append_doubles(out, state.base);
  if (state.adapter) append_doubles(out, state.adapter->params);
  write_file(path, out);
}

ToyModelState load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const auto magic_end = bytes.find('\n');
  if (magic_end == std::string::npos || bytes.compare(0, magic_end, kCheckpointMagic) != 0) {
    fail(ErrorKind::kParse, "not a selfcon checkpoint: " + path.string());
  }
  const auto header_end = bytes.find('\n', magic_end + 1);
  if (header_end == std::string::npos) fail(ErrorKind::kParse, "truncated checkpoint header: " + path.string());
  ToyModelState state;
  std::size_t adapter_count = 0;
  try {
    const json header = json::parse(bytes.substr(magic_end + 1, header_end - magic_end - 1));
    const json& c = header.at("config");
    state.config.layers = c.at("layers");
    state.config.width = c.at("width");
    state.config.heads = c.at("heads");
    state.config.vocab = c.at("vocab");
    state.config.context = c.at("context");
    state.config.mlp_hidden = c.at("mlp_hidden");
    state.config.rms_eps = c.at("rms_eps");
    state.layout = base_layout(state.config);
    if (header.at("base_count").get<std::size_t>() != state.layout.total()) {
      fail(ErrorKind::kParse, "checkpoint parameter count does not match its config");
    }
    state.seeds = header.at("seeds").get<std::vector<std::uint64_t>>();
    if (header.contains("adapter")) {
      Adapter ad;
      ad.rank = header["adapter"].at("rank");
      ad.alpha = header["adapter"].at("alpha");
      ad.layout = adapter_layout(state.config, ad.rank);
      adapter_count = header["adapter"].at("count");
      if (adapter_count != ad.layout.total()) fail(ErrorKind::kParse, "checkpoint adapter size mismatch");
      state.adapter = std::move(ad);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, "malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  const std::size_t payload = (state.layout.total() + adapter_count) * sizeof(double);
  if (bytes.size() - header_end - 1 != payload) fail(ErrorKind::kParse, "checkpoint payload size mismatch");
  const char* p = bytes.data() + header_end + 1;
  state.base.resize(state.layout.total());
  std::memcpy(state.base.data(), p, state.base.size() * sizeof(double));
  if (state.adapter) {
    state.adapter->params.resize(adapter_count);
    std::memcpy(state.adapter->params.data(), p + state.base.size() * sizeof(double), adapter_count * sizeof(double));
  }
  return state;
}

}  // namespace selfcon::toylm
