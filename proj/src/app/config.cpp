#include "lungseg/app/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace lungseg::app {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  fail(ErrorCode::InvalidConfig,
       "key '" + std::string(key) + "': '" + std::string(value) + "' is not " + std::string(expected));
}

template <typename N>
N parse_number(std::string_view key, std::string_view value) {
  N out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad_value(key, value, "true or false");
}

std::uint8_t parse_label(std::string_view key, std::string_view value) {
  const auto v = parse_number<unsigned>(key, value);
  if (v > 255) bad_value(key, value, "a label in 0..255");
  return static_cast<std::uint8_t>(v);
}

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Key {
  std::string_view name;
  std::function<void(RunConfig&, std::string_view, const std::filesystem::path&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename M>
Key path_key(std::string_view name, M member) {
  return {name,
          [member](RunConfig& c, std::string_view v, const std::filesystem::path& base) {
            std::filesystem::path p{std::string(v)};
            c.*member = p.is_relative() && !base.empty() ? base / p : p;
          },
          [member](const RunConfig& c) { return (c.*member).string(); }};
}

template <typename Get, typename Set>
Key key(std::string_view name, Set set, Get get) {
  return {name, [set](RunConfig& c, std::string_view v, const std::filesystem::path&) { set(c, v); }, get};
}

#define LS_SIZE_KEY(NAME, FIELD)                                                                         \
  key(                                                                                                   \
      NAME, [](RunConfig& c, std::string_view v) { c.FIELD = parse_number<std::size_t>(NAME, v); },     \
      [](const RunConfig& c) { return std::to_string(c.FIELD); })
#define LS_DOUBLE_KEY(NAME, FIELD)                                                                       \
  key(                                                                                                   \
      NAME, [](RunConfig& c, std::string_view v) { c.FIELD = parse_number<double>(NAME, v); },          \
      [](const RunConfig& c) { return shortest(c.FIELD); })
#define LS_LABEL_KEY(NAME, FIELD)                                                                        \
  key(                                                                                                   \
      NAME, [](RunConfig& c, std::string_view v) { c.FIELD = parse_label(NAME, v); },                   \
      [](const RunConfig& c) { return c.FIELD ? std::to_string(c.FIELD) : std::string(); })

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      path_key("scans_dir", &RunConfig::scans_dir),
      path_key("labels_dir", &RunConfig::labels_dir),
      path_key("out_dir", &RunConfig::out_dir),
      path_key("encoder_weights", &RunConfig::encoder_weights),
      LS_LABEL_KEY("label_left_lung", labels.left_lung),
      LS_LABEL_KEY("label_right_lung", labels.right_lung),
      LS_LABEL_KEY("label_trachea", labels.trachea),
      key(
          "strict_labels", [](RunConfig& c, std::string_view v) { c.strict_labels = parse_bool("strict_labels", v); },
          [](const RunConfig& c) { return std::string(c.strict_labels ? "true" : "false"); }),
      key(
          "mode", [](RunConfig& c, std::string_view v) { c.mode = slabgen::parse_slab_mode(v); },
          [](const RunConfig& c) { return std::string(slabgen::to_string(c.mode)); }),
      LS_SIZE_KEY("input_height", network.input_height),
      LS_SIZE_KEY("input_width", network.input_width),
      key(
          "width", [](RunConfig& c, std::string_view v) { c.network.width = nn::WidthMultiplier::parse(v); },
          [](const RunConfig& c) { return c.network.width.str(); }),
      key(
          "decoder_channels",
          [](RunConfig& c, std::string_view v) {
            std::size_t i = 0;
            while (!v.empty()) {
              const auto comma = v.find(',');
              const auto item = trim(v.substr(0, comma));
              if (i == c.network.decoder_channels.size()) bad_value("decoder_channels", v, "five channel counts");
              c.network.decoder_channels[i++] = parse_number<std::size_t>("decoder_channels", item);
              v = comma == std::string_view::npos ? std::string_view{} : v.substr(comma + 1);
            }
            if (i != c.network.decoder_channels.size()) bad_value("decoder_channels", v, "five channel counts");
          },
          [](const RunConfig& c) {
            std::string out;
            for (std::size_t ch : c.network.decoder_channels) out += (out.empty() ? "" : ",") + std::to_string(ch);
            return out;
          }),
      key(
          "freeze_encoder",
          [](RunConfig& c, std::string_view v) { c.network.freeze_encoder = parse_bool("freeze_encoder", v); },
          [](const RunConfig& c) { return std::string(c.network.freeze_encoder ? "true" : "false"); }),
      key(
          "net_seed", [](RunConfig& c, std::string_view v) { c.network.seed = parse_number<std::uint64_t>("net_seed", v); },
          [](const RunConfig& c) { return std::to_string(c.network.seed); }),
      LS_DOUBLE_KEY("lr", train.initial_lr),
      LS_SIZE_KEY("batch_size", train.batch_size),
      LS_SIZE_KEY("max_epochs", train.max_epochs),
      LS_DOUBLE_KEY("plateau_factor", train.plateau.factor),
      LS_SIZE_KEY("plateau_patience", train.plateau.patience),
      LS_DOUBLE_KEY("min_delta", train.plateau.min_delta),
      LS_DOUBLE_KEY("min_lr", train.plateau.min_lr),
      LS_SIZE_KEY("early_stop_patience", train.early_stop_patience),
      LS_DOUBLE_KEY("threshold", train.threshold),
      LS_SIZE_KEY("folds", train.folds),
      LS_DOUBLE_KEY("val_fraction", train.val_fraction),
      key(
          "shuffle_seed",
          [](RunConfig& c, std::string_view v) { c.train.shuffle_seed = parse_number<std::uint64_t>("shuffle_seed", v); },
          [](const RunConfig& c) { return std::to_string(c.train.shuffle_seed); }),
  };
  return table;
}

#undef LS_SIZE_KEY
#undef LS_DOUBLE_KEY
#undef LS_LABEL_KEY

}  // namespace

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) fail(ErrorCode::InvalidConfig, where + "expected 'key = value'");
    const auto name = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (name.empty() || value.empty()) fail(ErrorCode::InvalidConfig, where + "expected 'key = value'");

    const auto& table = keys();
    auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return k.name == name; });
    if (it == table.end()) fail(ErrorCode::InvalidConfig, where + "unknown key '" + std::string(name) + "'");
    if (!seen.emplace(name).second) fail(ErrorCode::InvalidConfig, where + "duplicate key '" + std::string(name) + "'");
    try {
      it->set(cfg, value, base_dir);
    } catch (const Error& e) {
      fail(ErrorCode::InvalidConfig, where + e.what());
    }
  }
  if (seen.count("label_left_lung") || seen.count("label_right_lung")) cfg.labels.validate();
  cfg.network.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_config(ss.str(), path.parent_path());
  check_paths(cfg);
  return cfg;
}

void check_paths(const RunConfig& cfg) {
  for (const auto* p : {&cfg.scans_dir, &cfg.labels_dir, &cfg.encoder_weights}) {
    if (!p->empty() && !std::filesystem::exists(*p)) fail(ErrorCode::IoError, "path does not exist: " + p->string());
  }
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : keys()) {
    const std::string v = k.get(cfg);
    if (!v.empty()) out += std::string(k.name) + " = " + v + "\n";
  }
  return out;
}

}  // namespace lungseg::app
