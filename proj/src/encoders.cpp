#include "czsl/encoders.hpp"

#include <cmath>
#include <fstream>

#include "czsl/binio.hpp"
#include "czsl/rng.hpp"

namespace czsl {

namespace {

constexpr char kFeatMagic[8] = {'C', 'Z', 'S', 'L', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFeatVersion = 1;
constexpr double kInitGain = 0.02;

Tensor random_frozen(Rng rng, idx_t rows, idx_t cols, double stddev) {
  std::vector<double> v(static_cast<std::size_t>(rows * cols));
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from({rows, cols}, std::move(v), false);
}

Tensor ones_row(idx_t n) { return Tensor::full({1, n}, 1.0); }
Tensor zeros_row(idx_t n) { return Tensor::zeros({1, n}); }

// Column block [h*hd, (h+1)*hd) of a d x d matrix.
Tensor col_slice(const Tensor& w, idx_t h, idx_t hd) {
  const idx_t d = w.rows();
  std::vector<double> out(static_cast<std::size_t>(d * hd));
  for (idx_t r = 0; r < d; ++r)
    for (idx_t c = 0; c < hd; ++c)
      out[static_cast<std::size_t>(r * hd + c)] = w.at(r, h * hd + c);
  return Tensor::from({d, hd}, std::move(out), false);
}

// Row block [h*hd, (h+1)*hd) of a d x d matrix.
Tensor row_slice(const Tensor& w, idx_t h, idx_t hd) {
  const idx_t d = w.cols();
  std::vector<double> out(static_cast<std::size_t>(hd * d));
  for (idx_t r = 0; r < hd; ++r)
    for (idx_t c = 0; c < d; ++c)
      out[static_cast<std::size_t>(r * d + c)] = w.at(h * hd + r, c);
  return Tensor::from({hd, d}, std::move(out), false);
}

}  // namespace

void TextEncoderWeights::finalize() {
  check(dims.d % dims.heads == 0, ErrorKind::config,
        "embedding width ", dims.d, " not divisible by ", dims.heads,
        " heads");
  const idx_t hd = head_dim();
  head_cache.clear();
  head_cache.reserve(blocks.size());
  for (const BlockWeights& b : blocks) {
    HeadSlices hs;
    for (idx_t h = 0; h < dims.heads; ++h) {
      hs.wq.push_back(col_slice(b.wq, h, hd));
      hs.wk.push_back(col_slice(b.wk, h, hd));
      hs.wv.push_back(col_slice(b.wv, h, hd));
      hs.wo.push_back(row_slice(b.wo, h, hd));
    }
    head_cache.push_back(std::move(hs));
  }
  const idx_t L = dims.context_len;
  std::vector<double> mask(static_cast<std::size_t>(L * L), 0.0);
  if (dims.causal) {
    for (idx_t i = 0; i < L; ++i)
      for (idx_t j = i + 1; j < L; ++j)
        mask[static_cast<std::size_t>(i * L + j)] = kNegInf;
  }
  attn_mask = Tensor::from({L, L}, std::move(mask), false);
}

std::vector<std::pair<std::string, const Tensor*>>
TextEncoderWeights::named_tensors() const {
  auto& self = const_cast<TextEncoderWeights&>(*this);
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : self.named_tensors()) out.emplace_back(name, t);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> TextEncoderWeights::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("enc.special", &special);
  out.emplace_back("enc.positional", &positional);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "enc.blk" + std::to_string(i) + ".";
    BlockWeights& b = blocks[i];
    out.emplace_back(p + "ln1.gain", &b.ln1_gain);
    out.emplace_back(p + "ln1.bias", &b.ln1_bias);
    out.emplace_back(p + "wq", &b.wq);
    out.emplace_back(p + "wk", &b.wk);
    out.emplace_back(p + "wv", &b.wv);
    out.emplace_back(p + "wo", &b.wo);
    out.emplace_back(p + "ln2.gain", &b.ln2_gain);
    out.emplace_back(p + "ln2.bias", &b.ln2_bias);
    out.emplace_back(p + "mlp_in", &b.mlp_in);
    out.emplace_back(p + "mlp_out", &b.mlp_out);
  }
  out.emplace_back("enc.final_proj", &final_proj);
  return out;
}

TextEncoderWeights init_frozen_text(std::uint64_t seed, const EncoderDims& dims) {
  check(dims.d > 0 && dims.blocks > 0 && dims.heads > 0 && dims.context_len > 0,
        ErrorKind::config, "encoder dims must be positive");
  check(dims.d % dims.heads == 0, ErrorKind::config, "embedding width ", dims.d,
        " not divisible by ", dims.heads, " heads");
  Rng root(seed);
  TextEncoderWeights w;
  w.dims = dims;
  w.special = random_frozen(root.split(1), 3, dims.d, kInitGain);
  w.positional = random_frozen(root.split(2), dims.context_len, dims.d, kInitGain);
  for (idx_t i = 0; i < dims.blocks; ++i) {
    Rng br = root.split(100 + static_cast<std::uint64_t>(i));
    BlockWeights b;
    b.ln1_gain = ones_row(dims.d);
    b.ln1_bias = zeros_row(dims.d);
    b.wq = random_frozen(br.split(1), dims.d, dims.d, kInitGain);
    b.wk = random_frozen(br.split(2), dims.d, dims.d, kInitGain);
    b.wv = random_frozen(br.split(3), dims.d, dims.d, kInitGain);
    b.wo = random_frozen(br.split(4), dims.d, dims.d, kInitGain);
    b.ln2_gain = ones_row(dims.d);
    b.ln2_bias = zeros_row(dims.d);
    b.mlp_in = random_frozen(br.split(5), dims.d, 4 * dims.d, kInitGain);
    b.mlp_out = random_frozen(br.split(6), 4 * dims.d, dims.d, kInitGain);
    w.blocks.push_back(std::move(b));
  }
  w.final_proj = random_frozen(root.split(3), dims.d, dims.d, kInitGain);
  w.finalize();
  return w;
}

Tensor frozen_concept_vocab(std::uint64_t seed, idx_t count, idx_t d) {
  check(count > 0 && d > 0, ErrorKind::config, "vocab dims must be positive");
  return random_frozen(Rng(seed).split(7), count, d, kInitGain);
}

Tensor init_frozen_image_projection(std::uint64_t seed, idx_t d_img, idx_t d) {
  check(d_img > 0 && d > 0, ErrorKind::config, "projection dims must be positive");
  return random_frozen(Rng(seed).split(8), d_img, d, kInitGain);
}

Tensor encode_text(const TextEncoderWeights& w, Tape* tape,
                   const Tensor& context, idx_t eos_position) {
  const idx_t L = w.dims.context_len, d = w.dims.d;
  if (!context.defined() || context.shape().size() != 2 ||
      context.rows() != L || context.cols() != d)
    fail(ErrorKind::contract, "encode_text: context must be ", L, "x", d,
         ", got ",
         context.defined() ? shape_str(context.shape()) : "<undefined>");
  check(eos_position >= 0 && eos_position < L, ErrorKind::contract,
        "encode_text: eos_position ", eos_position, " outside context of ", L);
  check(!w.head_cache.empty(), ErrorKind::state,
        "encode_text: weights not finalized");

  const idx_t hd = w.head_dim();
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor h = add(tape, context, w.positional);
  for (std::size_t bi = 0; bi < w.blocks.size(); ++bi) {
    const BlockWeights& b = w.blocks[bi];
    const auto& hs = w.head_cache[bi];
    Tensor n1 = layer_norm_rows(tape, h, b.ln1_gain, b.ln1_bias, w.dims.ln_eps);
    Tensor attn_out;
    for (idx_t head = 0; head < w.dims.heads; ++head) {
      Tensor q = matmul(tape, n1, hs.wq[static_cast<std::size_t>(head)]);
      Tensor k = matmul(tape, n1, hs.wk[static_cast<std::size_t>(head)]);
      Tensor v = matmul(tape, n1, hs.wv[static_cast<std::size_t>(head)]);
      Tensor scores = scale(tape, matmul(tape, q, transpose(tape, k)), attn_scale);
      Tensor weights = softmax_rows(tape, add(tape, scores, w.attn_mask));
      Tensor mixed = matmul(tape, weights, v);
      Tensor contrib = matmul(tape, mixed, hs.wo[static_cast<std::size_t>(head)]);
      attn_out = attn_out.defined() ? add(tape, attn_out, contrib) : contrib;
    }
    h = add(tape, h, attn_out);
    Tensor n2 = layer_norm_rows(tape, h, b.ln2_gain, b.ln2_bias, w.dims.ln_eps);
    Tensor mlp = matmul(tape, gelu(tape, matmul(tape, n2, b.mlp_in)), b.mlp_out);
    h = add(tape, h, mlp);
  }
  Tensor eos = slice_rows(tape, h, eos_position, 1);
  return l2_normalize_rows(tape, matmul(tape, eos, w.final_proj));
}

void ImageFeatureTable::add(const std::string& id, std::vector<double> feature) {
  check(!contains(id), ErrorKind::data, "duplicate image id '", id, "'");
  check(static_cast<idx_t>(feature.size()) == d_img, ErrorKind::data,
        "feature for '", id, "' has ", feature.size(), " values, expected ",
        d_img);
  index.emplace(id, static_cast<idx_t>(ids.size()));
  ids.push_back(id);
  features.push_back(std::move(feature));
}

const std::vector<double>& ImageFeatureTable::feature(const std::string& id) const {
  auto it = index.find(id);
  check(it != index.end(), ErrorKind::lookup, "unknown image id '", id, "'");
  return features[static_cast<std::size_t>(it->second)];
}

Tensor encode_image(const ImageFeatureTable& table, const Tensor& projection,
                    const std::string& image_id) {
  const auto& feat = table.feature(image_id);
  check(projection.defined() && projection.rows() == table.d_img,
        ErrorKind::shape, "image projection expects ", table.d_img,
        " rows, got ", shape_str(projection.shape()));
  Tensor f = Tensor::from({1, table.d_img}, feat);
  return l2_normalize_rows(nullptr, matmul(nullptr, f, projection));
}

void save_feature_table(const ImageFeatureTable& table, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  check(os.good(), ErrorKind::io, "cannot write feature table '", path, "'");
  binio::write_bytes(os, kFeatMagic, sizeof(kFeatMagic));
  binio::write_le<std::uint32_t>(os, kFeatVersion);
  binio::write_le<std::uint64_t>(os, table.ids.size());
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(table.d_img));
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    binio::write_string(os, table.ids[i]);
    binio::write_doubles(os, table.features[i]);
  }
  os.flush();
  check(os.good(), ErrorKind::io, "write failed for feature table '", path, "'");
}

ImageFeatureTable load_feature_table(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), ErrorKind::io, "cannot open feature table '", path, "'");
  char magic[8];
  binio::read_bytes(is, magic, sizeof(magic), "feature-table magic");
  check(std::memcmp(magic, kFeatMagic, sizeof(magic)) == 0, ErrorKind::integrity,
        "'", path, "' is not a feature table (bad magic)");
  const auto version = binio::read_le<std::uint32_t>(is, "feature-table version");
  check(version == kFeatVersion, ErrorKind::integrity,
        "unsupported feature-table version ", version, " (expected ",
        kFeatVersion, ")");
  const auto count = binio::read_le<std::uint64_t>(is, "feature-table count");
  const auto d_img = binio::read_le<std::uint32_t>(is, "feature-table d_img");
  ImageFeatureTable table;
  table.d_img = static_cast<idx_t>(d_img);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string id = binio::read_string(is, "feature record id");
    auto values = binio::read_doubles(is, d_img, "feature record values");
    table.add(id, std::move(values));
  }
  is.peek();
  check(is.eof(), ErrorKind::integrity, "trailing bytes after feature records in '",
        path, "'");
  return table;
}

}  // namespace czsl
