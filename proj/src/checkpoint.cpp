#include "oie/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace oie {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<Parameter*> sorted_params(OieModel& model) {
  std::vector<Parameter*> params = model.parameters();
  std::sort(params.begin(), params.end(),
            [](const Parameter* a, const Parameter* b) { return a->name < b->name; });
  return params;
}

std::string expect_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(std::string("checkpoint truncated before ") + what);
  }
  return line;
}

// "key=value" fields separated by spaces.
std::map<std::string, std::string> parse_fields(const std::string& line,
                                                std::size_t skip_prefix) {
  std::map<std::string, std::string> out;
  std::istringstream is(line.substr(skip_prefix));
  std::string item;
  while (is >> item) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("checkpoint: malformed field '" + item + "'");
    }
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

}  // namespace

void save_checkpoint(OieModel& model, const std::string& path, int stage) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);

  const ModelConfig& cfg = model.config();
  out << "OIECKPT v" << kCheckpointVersion << "\n";
  out << "encoder vocab_size=" << cfg.encoder.vocab_size
      << " hidden=" << cfg.encoder.hidden
      << " num_layers=" << cfg.encoder.num_layers
      << " num_heads=" << cfg.encoder.num_heads
      << " ffn_inner=" << cfg.encoder.ffn_inner
      << " max_len=" << cfg.encoder.max_len << "\n";
  out << "model arg_blocks=" << cfg.arg_blocks << "\n";

  out << "tags predicate=";
  for (std::size_t i = 0; i < TagScheme::predicate_names().size(); ++i) {
    if (i) out << ",";
    out << TagScheme::predicate_names()[i];
  }
  out << "\n";
  out << "tags argument=";
  for (std::size_t i = 0; i < TagScheme::argument_names().size(); ++i) {
    if (i) out << ",";
    out << TagScheme::argument_names()[i];
  }
  out << "\n";

  out << "vocab " << model.vocab().size() << "\n";
  for (const std::string& tok : model.vocab().tokens()) out << tok << "\n";

  out << "rng " << model.rng().serialize() << "\n";
  out << "stage " << stage << "\n";

  if (model.has_pool()) {
    const MoloraConfig& pc = model.pool()->config();
    out << "pool num_experts=" << pc.num_experts << " rank=" << pc.rank
        << " top_k=" << pc.top_k << " alpha_scale=" << fmt_double(pc.alpha_scale)
        << " adapt_embedding=" << (pc.adapt_embedding ? 1 : 0) << "\n";
  }

  std::vector<Parameter*> params = sorted_params(model);
  out << "tensors " << params.size() << "\n";
  for (const Parameter* p : params) {
    out << p->name << " " << param_group_name(p->group) << " "
        << p->value.ndim();
    for (int d : p->value.shape) out << " " << d;
    out << "\n";
  }
  out << "DATA\n";
  for (const Parameter* p : params) {
    out.write(reinterpret_cast<const char*>(p->value.data.data()),
              static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

namespace {

struct Header {
  EncoderConfig encoder;
  int arg_blocks = 2;
  std::vector<std::string> vocab_tokens;
  std::string rng_state;
  int stage = 0;
  bool has_pool = false;
  MoloraConfig pool;
  struct TensorMeta {
    std::string name;
    std::string group;
    std::vector<int> shape;
  };
  std::vector<TensorMeta> tensors;
};

Header read_header(std::istream& in, const std::string& path) {
  Header h;
  const std::string magic = expect_line(in, "version");
  if (magic != "OIECKPT v" + std::to_string(kCheckpointVersion)) {
    throw std::runtime_error("unsupported checkpoint version in " + path +
                             ": '" + magic + "'");
  }
  const auto enc = parse_fields(expect_line(in, "encoder line"), 8);
  h.encoder.vocab_size = std::stoi(enc.at("vocab_size"));
  h.encoder.hidden = std::stoi(enc.at("hidden"));
  h.encoder.num_layers = std::stoi(enc.at("num_layers"));
  h.encoder.num_heads = std::stoi(enc.at("num_heads"));
  h.encoder.ffn_inner = std::stoi(enc.at("ffn_inner"));
  h.encoder.max_len = std::stoi(enc.at("max_len"));

  const auto mdl = parse_fields(expect_line(in, "model line"), 6);
  h.arg_blocks = std::stoi(mdl.at("arg_blocks"));

  // Tag inventories are fixed; verify the file agrees.
  auto join = [](const std::vector<std::string>& names) {
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (i) s += ",";
      s += names[i];
    }
    return s;
  };
  if (expect_line(in, "predicate tags") !=
      "tags predicate=" + join(TagScheme::predicate_names())) {
    throw std::runtime_error("checkpoint: predicate tag scheme mismatch");
  }
  if (expect_line(in, "argument tags") !=
      "tags argument=" + join(TagScheme::argument_names())) {
    throw std::runtime_error("checkpoint: argument tag scheme mismatch");
  }

  std::istringstream vs(expect_line(in, "vocab line"));
  std::string word;
  int vocab_count = 0;
  vs >> word >> vocab_count;
  if (word != "vocab" || vocab_count < 3) {
    throw std::runtime_error("checkpoint: malformed vocab header");
  }
  h.vocab_tokens.reserve(static_cast<std::size_t>(vocab_count));
  for (int i = 0; i < vocab_count; ++i) {
    h.vocab_tokens.push_back(expect_line(in, "vocab token"));
  }

  const std::string rng_line = expect_line(in, "rng line");
  if (rng_line.rfind("rng ", 0) != 0) {
    throw std::runtime_error("checkpoint: malformed rng line");
  }
  h.rng_state = rng_line.substr(4);

  const std::string stage_line = expect_line(in, "stage line");
  if (stage_line.rfind("stage ", 0) != 0) {
    throw std::runtime_error("checkpoint: malformed stage line");
  }
  h.stage = std::stoi(stage_line.substr(6));

  std::string next = expect_line(in, "tensor table");
  if (next.rfind("pool ", 0) == 0) {
    const auto pf = parse_fields(next, 5);
    h.has_pool = true;
    h.pool.num_experts = std::stoi(pf.at("num_experts"));
    h.pool.rank = std::stoi(pf.at("rank"));
    h.pool.top_k = std::stoi(pf.at("top_k"));
    h.pool.alpha_scale = std::stod(pf.at("alpha_scale"));
    h.pool.adapt_embedding = pf.at("adapt_embedding") == "1";
    next = expect_line(in, "tensor table");
  }

  std::istringstream ts(next);
  int tensor_count = 0;
  ts >> word >> tensor_count;
  if (word != "tensors" || tensor_count < 1) {
    throw std::runtime_error("checkpoint: malformed tensor table header");
  }
  for (int i = 0; i < tensor_count; ++i) {
    std::istringstream row(expect_line(in, "tensor row"));
    Header::TensorMeta meta;
    int ndim = 0;
    row >> meta.name >> meta.group >> ndim;
    for (int d = 0; d < ndim; ++d) {
      int dim = 0;
      row >> dim;
      meta.shape.push_back(dim);
    }
    if (!row || ndim < 1) throw std::runtime_error("checkpoint: malformed tensor row");
    h.tensors.push_back(std::move(meta));
  }
  if (expect_line(in, "DATA marker") != "DATA") {
    throw std::runtime_error("checkpoint: missing data marker");
  }
  return h;
}

void read_payload(std::istream& in, const std::string& path,
                  const Header::TensorMeta& meta, std::vector<double>& out) {
  std::size_t n = 1;
  for (int d : meta.shape) n *= static_cast<std::size_t>(d);
  out.resize(n);
  in.read(reinterpret_cast<char*>(out.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double)) {
    throw std::runtime_error("checkpoint truncated in tensor payload of " +
                             meta.name + " in " + path);
  }
}

}  // namespace

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  Header h = read_header(in, path);

  ModelConfig cfg;
  cfg.encoder = h.encoder;
  cfg.arg_blocks = h.arg_blocks;
  Vocabulary vocab = Vocabulary::from_tokens(h.vocab_tokens);
  OieModel model(cfg, std::move(vocab), 0);
  if (h.has_pool) {
    Rng scratch(0);
    model.set_pool(LoraExpertPool::create(cfg.encoder, h.pool, scratch));
  }

  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : model.parameters()) by_name[p->name] = p;
  if (by_name.size() != h.tensors.size()) {
    throw std::runtime_error("checkpoint: tensor count does not match model (" +
                             std::to_string(h.tensors.size()) + " vs " +
                             std::to_string(by_name.size()) + ")");
  }
  for (const auto& meta : h.tensors) {
    auto it = by_name.find(meta.name);
    if (it == by_name.end()) {
      throw std::runtime_error("checkpoint: unexpected tensor " + meta.name);
    }
    Parameter* p = it->second;
    if (p->value.shape != meta.shape) {
      throw std::runtime_error("checkpoint: shape mismatch for " + meta.name);
    }
    if (param_group_name(p->group) != meta.group) {
      throw std::runtime_error("checkpoint: group mismatch for " + meta.name);
    }
    read_payload(in, path, meta, p->value.data);
    p->zero_grad();
  }
  model.rng() = Rng::deserialize(h.rng_state);
  return LoadedCheckpoint{std::move(model), h.stage};
}

RawCheckpoint read_checkpoint_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  Header h = read_header(in, path);
  RawCheckpoint raw;
  raw.stage = h.stage;
  for (const auto& meta : h.tensors) {
    std::vector<double> values;
    read_payload(in, path, meta, values);
    RawTensor rt;
    rt.group = meta.group;
    rt.shape = meta.shape;
    rt.bytes.resize(values.size() * sizeof(double));
    std::memcpy(rt.bytes.data(), values.data(), rt.bytes.size());
    raw.tensors.emplace(meta.name, std::move(rt));
  }
  return raw;
}

}  // namespace oie
