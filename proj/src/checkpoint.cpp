#include "uniflow/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace uniflow {

namespace fs = std::filesystem;

namespace {

constexpr const char* kMagic = "uniflow-checkpoint 1";

struct Group {
  const char* prefix;
  const ModelParams<float>* params;
};

void write_config(std::ostream& os, const ModelConfig& c) {
  os << "config d_emb " << c.d_emb << "\n"
     << "config n_blocks " << c.n_blocks << "\n"
     << "config n_heads " << c.n_heads << "\n"
     << "config l_max " << c.l_max << "\n"
     << "config vocab " << c.vocab << "\n"
     << "config repa_block " << c.repa_block << "\n"
     << "config d_enc " << c.d_enc << "\n"
     << "config c_gen " << c.c_gen << "\n"
     << "config time_freqs " << c.time_freqs << "\n"
     << "config shared_encoder " << (c.shared_encoder ? 1 : 0) << "\n";
}

void set_config(ModelConfig& c, const std::string& key, int v) {
  if (key == "d_emb") c.d_emb = v;
  else if (key == "n_blocks") c.n_blocks = v;
  else if (key == "n_heads") c.n_heads = v;
  else if (key == "l_max") c.l_max = v;
  else if (key == "vocab") c.vocab = v;
  else if (key == "repa_block") c.repa_block = v;
  else if (key == "d_enc") c.d_enc = v;
  else if (key == "c_gen") c.c_gen = v;
  else if (key == "time_freqs") c.time_freqs = v;
  else if (key == "shared_encoder") c.shared_encoder = v != 0;
  else throw Error("checkpoint: unknown config key " + key);
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream man(dir / "manifest.txt");
  std::ofstream bin(dir / "weights.bin", std::ios::binary);
  if (!man || !bin) throw Error("cannot write checkpoint to " + dir.string());
  man << kMagic << "\n";
  write_config(man, ck.params.cfg);
  man << "stages_done " << ck.stages_done << "\n";
  if (ck.opt) man << "adam_step " << ck.opt->step << "\n";

  std::vector<Group> groups{{"", &ck.params}, {"ema/", &ck.ema}};
  if (ck.opt) {
    groups.push_back({"adam_m/", &ck.opt->m});
    groups.push_back({"adam_v/", &ck.opt->v});
  }
  size_t offset = 0;
  for (const Group& g : groups) {
    for (const auto& t : g.params->tensors()) {
      const Mat<float>& m = *t.tensor;
      man << "tensor " << g.prefix << t.name << " f32 " << m.rows() << "x" << m.cols() << " "
          << offset << "\n";
      write_f32_le(bin, m.data(), static_cast<size_t>(m.size()));
      offset += static_cast<size_t>(m.size()) * sizeof(float);
    }
  }
  if (!man || !bin) throw Error("failed writing checkpoint " + dir.string());
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream man(dir / "manifest.txt");
  if (!man) throw Error("no checkpoint manifest in " + dir.string());
  std::string line;
  if (!std::getline(man, line) || line != kMagic) {
    throw Error(dir.string() + ": not a checkpoint manifest");
  }
  ModelConfig cfg;
  int stages_done = 0;
  std::optional<long> adam_step;
  struct Spec {
    long rows, cols;
    size_t offset;
  };
  std::map<std::string, Spec> specs;
  int lineno = 1;
  while (std::getline(man, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    auto bad = [&]() {
      return Error((dir / "manifest.txt").string() + ":" + std::to_string(lineno) +
                   ": malformed line");
    };
    if (kind == "config") {
      std::string key;
      int v;
      if (!(ls >> key >> v)) throw bad();
      set_config(cfg, key, v);
    } else if (kind == "stages_done") {
      if (!(ls >> stages_done)) throw bad();
    } else if (kind == "adam_step") {
      long s;
      if (!(ls >> s)) throw bad();
      adam_step = s;
    } else if (kind == "tensor") {
      std::string name, dtype, shape;
      size_t offset;
      if (!(ls >> name >> dtype >> shape >> offset) || dtype != "f32") throw bad();
      const auto x = shape.find('x');
      if (x == std::string::npos) throw bad();
      specs[name] = {std::stol(shape.substr(0, x)), std::stol(shape.substr(x + 1)), offset};
    } else {
      throw bad();
    }
  }
  cfg.validate();

  std::ifstream bin(dir / "weights.bin", std::ios::binary);
  if (!bin) throw Error("no weights.bin in " + dir.string());
  Checkpoint ck;
  ck.params = init_model<float>(cfg, 0);
  ck.ema = ck.params;
  ck.stages_done = stages_done;
  if (adam_step) {
    ck.opt = make_optimizer_state(ck.params);
    ck.opt->step = *adam_step;
  }
  auto fill = [&](const std::string& prefix, ModelParams<float>& p) {
    for (auto& t : p.tensors()) {
      auto it = specs.find(prefix + t.name);
      if (it == specs.end()) throw Error("checkpoint is missing tensor " + prefix + t.name);
      const Spec& s = it->second;
      if (s.rows != t.tensor->rows() || s.cols != t.tensor->cols()) {
        throw Error("checkpoint tensor " + prefix + t.name + " has shape " +
                    shape_str(s.rows, s.cols) + ", model expects " +
                    shape_str(t.tensor->rows(), t.tensor->cols()));
      }
      bin.seekg(static_cast<std::streamoff>(s.offset));
      read_f32_le(bin, t.tensor->data(), static_cast<size_t>(t.tensor->size()));
      specs.erase(it);
    }
  };
  fill("", ck.params);
  fill("ema/", ck.ema);
  if (ck.opt) {
    fill("adam_m/", ck.opt->m);
    fill("adam_v/", ck.opt->v);
  }
  if (!specs.empty()) throw Error("checkpoint has unexpected tensor " + specs.begin()->first);
  return ck;
}

}  // namespace uniflow
