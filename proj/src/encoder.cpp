#include "oie/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace oie {

void EncoderConfig::validate() const {
  if (vocab_size < 3) throw std::invalid_argument("encoder: vocab too small");
  if (hidden < 1 || num_layers < 1 || num_heads < 1 || ffn_inner < 1 ||
      max_len < 2) {
    throw std::invalid_argument("encoder: non-positive dimension");
  }
  if (hidden % num_heads != 0) {
    throw std::invalid_argument("encoder: hidden size must divide evenly across heads");
  }
}

namespace {

Tensor gaussian_tensor(std::vector<int> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.gaussian(0.0, stddev);
  return t;
}

}  // namespace

Encoder::Layer Encoder::make_layer(const std::string& prefix, ParamGroup group,
                                   int hidden, int ffn_inner, Rng& rng) {
  const double attn_std = 1.0 / std::sqrt(static_cast<double>(hidden));
  const double ffn_std = 1.0 / std::sqrt(static_cast<double>(ffn_inner));
  Layer ly;
  ly.wq = Parameter(prefix + ".attn.wq", group, gaussian_tensor({hidden, hidden}, attn_std, rng));
  ly.wk = Parameter(prefix + ".attn.wk", group, gaussian_tensor({hidden, hidden}, attn_std, rng));
  ly.wv = Parameter(prefix + ".attn.wv", group, gaussian_tensor({hidden, hidden}, attn_std, rng));
  ly.wo = Parameter(prefix + ".attn.wo", group, gaussian_tensor({hidden, hidden}, attn_std, rng));
  ly.ffn_w1 = Parameter(prefix + ".ffn.w1", group, gaussian_tensor({hidden, ffn_inner}, attn_std, rng));
  ly.ffn_b1 = Parameter(prefix + ".ffn.b1", group, Tensor({1, ffn_inner}));
  ly.ffn_w2 = Parameter(prefix + ".ffn.w2", group, gaussian_tensor({ffn_inner, hidden}, ffn_std, rng));
  ly.ffn_b2 = Parameter(prefix + ".ffn.b2", group, Tensor({1, hidden}));
  ly.ln1_gamma = Parameter(prefix + ".ln1.gamma", group, Tensor::full({1, hidden}, 1.0));
  ly.ln1_beta = Parameter(prefix + ".ln1.beta", group, Tensor({1, hidden}));
  ly.ln2_gamma = Parameter(prefix + ".ln2.gamma", group, Tensor::full({1, hidden}, 1.0));
  ly.ln2_beta = Parameter(prefix + ".ln2.beta", group, Tensor({1, hidden}));
  return ly;
}

Encoder::Encoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  Tensor word = gaussian_tensor({cfg.vocab_size, cfg.hidden}, 0.02, rng);
  for (int j = 0; j < cfg.hidden; ++j) word.at(0, j) = 0.0;  // padding row
  word_emb_ = Parameter("embeddings.word", ParamGroup::word, std::move(word));
  pos_emb_ = Parameter("embeddings.position", ParamGroup::position,
                       gaussian_tensor({cfg.max_len, cfg.hidden}, 0.02, rng));
  for (int l = 0; l < cfg.num_layers; ++l) {
    layers_.push_back(make_layer("encoder.layer" + std::to_string(l),
                                 ParamGroup::body, cfg.hidden, cfg.ffn_inner, rng));
  }
}

std::vector<int> Encoder::with_marker(const std::vector<int>& token_ids) const {
  if (static_cast<int>(token_ids.size()) + 1 > cfg_.max_len) {
    throw std::invalid_argument("encode: sentence longer than max_len");
  }
  for (int id : token_ids) {
    if (id < 0 || id >= cfg_.vocab_size) {
      throw std::invalid_argument("encode: token id out of vocabulary");
    }
  }
  std::vector<int> ids;
  ids.reserve(token_ids.size() + 1);
  ids.push_back(2);  // sentence-start marker row
  ids.insert(ids.end(), token_ids.begin(), token_ids.end());
  return ids;
}

Var Encoder::transformer_block(Tape& t, Var x, Layer& ly, int num_heads,
                               LoraExpertPool* pool, int site_layer,
                               const LoraExpertPool::TapeGate* gate) {
  const int d = t.val(x).dim(1);
  const int dk = d / num_heads;

  Var q = t.matmul(x, t.leaf(ly.wq));
  Var k = t.matmul(x, t.leaf(ly.wk));
  Var v = t.matmul(x, t.leaf(ly.wv));
  if (pool && site_layer >= 0) {
    q = pool->apply(t, q, pool->site_index(site_layer, SiteKind::attn_q), *gate);
    v = pool->apply(t, v, pool->site_index(site_layer, SiteKind::attn_v), *gate);
  }

  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(num_heads));
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int h = 0; h < num_heads; ++h) {
    Var qh = t.slice_cols(q, h * dk, (h + 1) * dk);
    Var kh = t.slice_cols(k, h * dk, (h + 1) * dk);
    Var vh = t.slice_cols(v, h * dk, (h + 1) * dk);
    Var scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt_dk);
    Var weights = t.softmax(scores, 1);
    heads.push_back(t.matmul(weights, vh));
  }
  Var attn = t.matmul(t.concat_cols(heads), t.leaf(ly.wo));
  Var res1 = t.layer_norm(t.add(x, attn), t.leaf(ly.ln1_gamma), t.leaf(ly.ln1_beta));

  Var u = t.matmul(res1, t.leaf(ly.ffn_w1));
  if (pool && site_layer >= 0) {
    u = pool->apply(t, u, pool->site_index(site_layer, SiteKind::ffn_in), *gate);
  }
  u = t.relu(t.add_broadcast_row(u, t.leaf(ly.ffn_b1)));
  Var z = t.matmul(u, t.leaf(ly.ffn_w2));
  if (pool && site_layer >= 0) {
    z = pool->apply(t, z, pool->site_index(site_layer, SiteKind::ffn_out), *gate);
  }
  z = t.add_broadcast_row(z, t.leaf(ly.ffn_b2));
  return t.layer_norm(t.add(res1, z), t.leaf(ly.ln2_gamma), t.leaf(ly.ln2_beta));
}

HiddenStates Encoder::encode(Tape& t, const std::vector<int>& token_ids,
                             LoraExpertPool* pool) {
  const std::vector<int> ids = with_marker(token_ids);
  const int n = static_cast<int>(ids.size());

  std::vector<int> positions(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) positions[static_cast<std::size_t>(i)] = i;

  Var words = t.embedding(t.leaf(word_emb_), ids);
  Var pos = t.embedding(t.leaf(pos_emb_), positions);
  Var x = t.add(words, pos);

  if (pool && pool->config().adapt_embedding) {
    auto g = pool->gate_on_tape(t, t.slice_rows(x, 0, 1), pool->gate_index(-1));
    x = pool->apply(t, x, pool->site_index(-1, SiteKind::embedding), g);
  }

  HiddenStates hs;
  hs.seq_len = n;
  hs.states.push_back(x);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    if (pool) {
      auto g = pool->gate_on_tape(t, t.slice_rows(x, 0, 1), pool->gate_index(l));
      x = transformer_block(t, x, layers_[static_cast<std::size_t>(l)],
                            cfg_.num_heads, pool, l, &g);
    } else {
      x = transformer_block(t, x, layers_[static_cast<std::size_t>(l)],
                            cfg_.num_heads);
    }
    hs.states.push_back(x);
  }
  return hs;
}

AttentionScoreTerms Encoder::attention_score_decomposition(
    int layer, int head, const std::vector<int>& token_ids) {
  if (layer < 0 || layer >= cfg_.num_layers) {
    throw std::invalid_argument("decomposition: layer index out of range");
  }
  if (head < 0 || head >= cfg_.num_heads) {
    throw std::invalid_argument("decomposition: head index out of range");
  }
  Tape t;
  HiddenStates hs = encode(t, token_ids);
  const Tensor x = t.val(hs.states[static_cast<std::size_t>(layer)]);
  const int n = x.dim(0);
  const Tensor pos = tslice_rows(pos_emb_.value, 0, n);
  // At layer 0 the content part is exactly the word embedding; deeper layers
  // split the actual input against the raw position rows.
  Tensor content;
  if (layer == 0) {
    const std::vector<int> ids = with_marker(token_ids);
    content = Tensor({n, cfg_.hidden});
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < cfg_.hidden; ++j) {
        content.at(i, j) = word_emb_.value.at(ids[static_cast<std::size_t>(i)], j);
      }
    }
  } else {
    content = tsub(x, pos);
  }

  const int dk = cfg_.head_dim();
  const Layer& ly = layers_[static_cast<std::size_t>(layer)];
  const Tensor wq = tslice_cols(ly.wq.value, head * dk, (head + 1) * dk);
  const Tensor wk = tslice_cols(ly.wk.value, head * dk, (head + 1) * dk);

  const Tensor cq = tmatmul(content, wq);
  const Tensor pq = tmatmul(pos, wq);
  const Tensor ck = tmatmul(content, wk);
  const Tensor pk = tmatmul(pos, wk);

  AttentionScoreTerms terms;
  terms.content_content = tmatmul(cq, ttranspose(ck));
  terms.content_position = tmatmul(cq, ttranspose(pk));
  terms.position_content = tmatmul(pq, ttranspose(ck));
  terms.position_position = tmatmul(pq, ttranspose(pk));
  terms.full = tmatmul(tmatmul(x, wq), ttranspose(tmatmul(x, wk)));
  return terms;
}

void Encoder::for_each_param(const std::function<void(Parameter&)>& fn) {
  fn(word_emb_);
  fn(pos_emb_);
  for (auto& ly : layers_) {
    fn(ly.wq); fn(ly.wk); fn(ly.wv); fn(ly.wo);
    fn(ly.ffn_w1); fn(ly.ffn_b1); fn(ly.ffn_w2); fn(ly.ffn_b2);
    fn(ly.ln1_gamma); fn(ly.ln1_beta); fn(ly.ln2_gamma); fn(ly.ln2_beta);
  }
}

}  // namespace oie
