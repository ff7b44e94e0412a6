#include "uniflow/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace uniflow {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Entry {
  std::string value;
  int line = 0;
};

class Reader {
 public:
  Reader(std::map<std::string, Entry> kv, std::string source)
      : kv_(std::move(kv)), source_(std::move(source)) {}

  bool has(const std::string& k) const { return kv_.count(k) > 0; }

  template <class N>
  N number(const std::string& k) const {
    const Entry& e = kv_.at(k);
    N v{};
    const char* first = e.value.data();
    const char* last = first + e.value.size();
    auto r = std::from_chars(first, last, v);
    if (r.ec != std::errc() || r.ptr != last) fail(e, "invalid value \"" + e.value + "\" for " + k);
    return v;
  }
  TaskRatio ratio(const std::string& k) const {
    const Entry& e = kv_.at(k);
    try {
      return TaskRatio::parse(e.value);
    } catch (const Error& err) {
      fail(e, err.what());
    }
  }

 private:
  [[noreturn]] void fail(const Entry& e, const std::string& msg) const {
    throw Error(source_ + ":" + std::to_string(e.line) + ": " + msg);
  }
  std::map<std::string, Entry> kv_;
  std::string source_;
};

const char* const kKeys[] = {
    "seed",         "scale",        "d_emb",        "n_blocks",     "n_heads",
    "d_enc",        "repa_block",   "stage1.steps", "stage1.batch", "stage1.lr",
    "stage1.ratio", "stage2.steps", "stage2.batch", "stage2.lr",    "stage2.ratio",
    "stage3.steps", "stage3.batch", "stage3.lr",    "stage3.ratio", "cfg.w",
    "cfg.steps",
};

bool known_key(const std::string& k) {
  for (const char* key : kKeys) {
    if (k == key) return true;
  }
  return false;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  for (const auto& s : stages) s.validate();
  if (cfg_w < 1.0) throw Error("cfg.w must be >= 1");
  if (cfg_steps < 1) throw Error("cfg.steps must be >= 1");
  if (scale < 0) throw Error("scale must be >= 0");
}

TrainConfig parse_config(std::istream& is, const std::string& source) {
  std::map<std::string, Entry> kv;
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    std::string line = raw;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(source + ":" + std::to_string(lineno) + ": expected `key = value`");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!known_key(key)) {
      throw Error(source + ":" + std::to_string(lineno) + ": unknown key \"" + key + "\"");
    }
    if (value.empty()) throw Error(source + ":" + std::to_string(lineno) + ": empty value for " + key);
    if (kv.count(key)) {
      throw Error(source + ":" + std::to_string(lineno) + ": duplicate key \"" + key + "\"");
    }
    kv[key] = {value, lineno};
  }

  Reader r(std::move(kv), source);
  TrainConfig c;
  if (r.has("seed")) c.seed = r.number<std::uint64_t>("seed");
  if (r.has("scale")) c.scale = r.number<double>("scale");
  if (r.has("d_emb")) c.model.d_emb = r.number<int>("d_emb");
  if (r.has("n_blocks")) c.model.n_blocks = r.number<int>("n_blocks");
  if (r.has("n_heads")) c.model.n_heads = r.number<int>("n_heads");
  if (r.has("d_enc")) c.model.d_enc = r.number<int>("d_enc");
  if (r.has("repa_block")) c.model.repa_block = r.number<int>("repa_block");
  for (int s = 1; s <= 3; ++s) {
    StageConfig& st = c.stages[s - 1];
    st = desk_stage(s, c.scale);
    const std::string p = "stage" + std::to_string(s) + ".";
    if (r.has(p + "steps")) st.total_steps = r.number<int>(p + "steps");
    if (r.has(p + "batch")) st.batch_size = r.number<int>(p + "batch");
    if (r.has(p + "lr")) st.lr = r.number<double>(p + "lr");
    if (r.has(p + "ratio")) {
      st.ratio = r.ratio(p + "ratio");
      if (s != 2) st.early_ratio = st.ratio;
    }
  }
  if (r.has("cfg.w")) c.cfg_w = r.number<double>("cfg.w");
  if (r.has("cfg.steps")) c.cfg_steps = r.number<int>("cfg.steps");
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(source + ": " + e.what());
  }
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open config " + path.string());
  return parse_config(is, path.string());
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream os;
  os << "seed = " << c.seed << "\n";
  os << "scale = " << fmt(c.scale) << "\n";
  os << "d_emb = " << c.model.d_emb << "\n";
  os << "n_blocks = " << c.model.n_blocks << "\n";
  os << "n_heads = " << c.model.n_heads << "\n";
  os << "d_enc = " << c.model.d_enc << "\n";
  os << "repa_block = " << c.model.repa_block << "\n";
  for (int s = 1; s <= 3; ++s) {
    const StageConfig& st = c.stages[s - 1];
    const std::string p = "stage" + std::to_string(s) + ".";
    os << p << "steps = " << st.total_steps << "\n";
    os << p << "batch = " << st.batch_size << "\n";
    os << p << "lr = " << fmt(st.lr) << "\n";
    os << p << "ratio = " << st.ratio.str() << "\n";
  }
  os << "cfg.w = " << fmt(c.cfg_w) << "\n";
  os << "cfg.steps = " << c.cfg_steps << "\n";
  return os.str();
}

}  // namespace uniflow
