#include "czsl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace czsl {

namespace {

constexpr double kPosInf = std::numeric_limits<double>::infinity();

double cosine(const std::vector<double>& v, idx_t d, idx_t row_a, idx_t row_b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  const double* a = &v[static_cast<std::size_t>(row_a * d)];
  const double* b = &v[static_cast<std::size_t>(row_b * d)];
  for (idx_t i = 0; i < d; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na < 1e-24 || nb < 1e-24) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string fmt_double(double v) {
  if (v == kNegInf) return "-inf";
  if (v == kPosInf) return "inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace

FeasibilityScores feasibility_scores(const CompositionSpace& space,
                                     const Tensor& soft_embedding) {
  const idx_t A = space.num_attrs(), O = space.num_objs();
  check(soft_embedding.defined() && soft_embedding.rows() == A + O,
        ErrorKind::contract, "soft embedding must have ", A + O, " rows, got ",
        shape_str(soft_embedding.shape()));
  const idx_t d = soft_embedding.cols();
  const auto& emb = soft_embedding.values();

  std::vector<std::vector<idx_t>> objs_of_attr(static_cast<std::size_t>(A));
  std::vector<std::vector<idx_t>> attrs_of_obj(static_cast<std::size_t>(O));
  for (const Pair& p : space.train_pairs) {
    objs_of_attr[static_cast<std::size_t>(p.attr)].push_back(p.obj);
    attrs_of_obj[static_cast<std::size_t>(p.obj)].push_back(p.attr);
  }
  const std::set<Pair> train_set(space.train_pairs.begin(),
                                 space.train_pairs.end());

  FeasibilityScores out;
  out.num_objs = O;
  out.score.assign(static_cast<std::size_t>(A * O), 0.0);
  for (idx_t a = 0; a < A; ++a) {
    for (idx_t o = 0; o < O; ++o) {
      double& slot = out.score[static_cast<std::size_t>(a * O + o)];
      if (train_set.count({a, o})) {
        slot = kPosInf;
        continue;
      }
      // Best object partner of attribute a, compared against object o.
      double f_attr = kNegInf;
      for (idx_t other : objs_of_attr[static_cast<std::size_t>(a)])
        f_attr = std::max(f_attr, cosine(emb, d, A + o, A + other));
      // Best attribute partner of object o, compared against attribute a.
      double f_obj = kNegInf;
      for (idx_t other : attrs_of_obj[static_cast<std::size_t>(o)])
        f_obj = std::max(f_obj, cosine(emb, d, a, other));
      if (f_attr == kNegInf) {
        f_attr = 0.0;
        ++out.unpartnered_halves;
      }
      if (f_obj == kNegInf) {
        f_obj = 0.0;
        ++out.unpartnered_halves;
      }
      slot = 0.5 * (f_attr + f_obj);
    }
  }
  return out;
}

Tensor score_matrix(const ModelSnapshot& snap,
                    const std::vector<std::string>& image_ids,
                    const std::vector<Pair>& target_pairs,
                    const std::vector<bool>* keep) {
  snap.validate();
  check(!image_ids.empty(), ErrorKind::contract, "score_matrix: no images");
  check(!target_pairs.empty(), ErrorKind::contract, "score_matrix: no pairs");
  check(keep == nullptr || keep->size() == target_pairs.size(),
        ErrorKind::contract, "score_matrix: mask size mismatch");
  check(snap.features != nullptr, ErrorKind::contract,
        "snapshot has no feature table");

  const Tensor texts = text_matrix(nullptr, snap, target_pairs);
  const idx_t P = texts.rows(), d = texts.cols();
  const idx_t N = static_cast<idx_t>(image_ids.size());
  std::vector<double> scores(static_cast<std::size_t>(N * P));
  const double inv_tau = 1.0 / snap.tau;
  for (idx_t i = 0; i < N; ++i) {
    const Tensor img = encode_image(*snap.features, snap.image_projection,
                                    image_ids[static_cast<std::size_t>(i)]);
    double* row = &scores[static_cast<std::size_t>(i * P)];
    for (idx_t j = 0; j < P; ++j) {
      if (keep && !(*keep)[static_cast<std::size_t>(j)]) {
        row[j] = kNegInf;
        continue;
      }
      double dot = 0.0;
      for (idx_t c = 0; c < d; ++c) dot += img.at(0, c) * texts.at(j, c);
      row[j] = dot * inv_tau;
    }
  }
  return Tensor::from({N, P}, std::move(scores));
}

std::vector<CurvePoint> bias_sweep(const Tensor& scores,
                                   const std::vector<idx_t>& truth,
                                   const std::vector<bool>& seen_pair_flags) {
  const idx_t N = scores.rows(), P = scores.cols();
  check(static_cast<idx_t>(truth.size()) == N, ErrorKind::contract,
        "bias_sweep: ", truth.size(), " labels for ", N, " images");
  check(static_cast<idx_t>(seen_pair_flags.size()) == P, ErrorKind::contract,
        "bias_sweep: ", seen_pair_flags.size(), " seen flags for ", P, " pairs");
  idx_t n_seen_img = 0, n_unseen_img = 0;
  for (idx_t t : truth) {
    check(t >= 0 && t < P, ErrorKind::index, "bias_sweep: label ", t,
          " outside target set of ", P);
    (seen_pair_flags[static_cast<std::size_t>(t)] ? n_seen_img : n_unseen_img)++;
  }
  check(n_seen_img > 0 && n_unseen_img > 0, ErrorKind::contract,
        "bias_sweep needs both seen-labeled and unseen-labeled images, got ",
        n_seen_img, " seen and ", n_unseen_img, " unseen");

  const auto& sv = scores.values();
  std::vector<double> candidates;
  candidates.push_back(kNegInf);
  for (idx_t i = 0; i < N; ++i) {
    const double* row = &sv[static_cast<std::size_t>(i * P)];
    double max_seen = kNegInf;
    for (idx_t j = 0; j < P; ++j)
      if (seen_pair_flags[static_cast<std::size_t>(j)])
        max_seen = std::max(max_seen, row[j]);
    check(max_seen != kNegInf, ErrorKind::contract,
          "bias_sweep: image ", i, " has no scored seen pair");
    for (idx_t j = 0; j < P; ++j) {
      if (seen_pair_flags[static_cast<std::size_t>(j)]) continue;
      if (row[j] == kNegInf) continue;  // masked pair, never predictable
      candidates.push_back(max_seen - row[j]);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  std::vector<CurvePoint> curve;
  curve.reserve(candidates.size());
  for (double c : candidates) {
    idx_t seen_correct = 0, unseen_correct = 0;
    for (idx_t i = 0; i < N; ++i) {
      const double* row = &sv[static_cast<std::size_t>(i * P)];
      idx_t best = -1;
      double best_score = kNegInf;
      bool best_unseen = false;
      for (idx_t j = 0; j < P; ++j) {
        const bool unseen = !seen_pair_flags[static_cast<std::size_t>(j)];
        double s = row[j];
        if (unseen && s != kNegInf) s += c;  // keep masked pairs at -inf
        // Strict improvement wins; an exact tie goes to the shifted unseen
        // side (catch-up = overtake); same-side ties keep the lower index.
        const bool better = best < 0 || s > best_score ||
                            (s == best_score && unseen && !best_unseen);
        if (better) {
          best = j;
          best_score = s;
          best_unseen = unseen;
        }
      }
      const idx_t t = truth[static_cast<std::size_t>(i)];
      if (best == t) {
        if (seen_pair_flags[static_cast<std::size_t>(t)])
          ++seen_correct;
        else
          ++unseen_correct;
      }
    }
    curve.push_back({c,
                     static_cast<double>(seen_correct) /
                         static_cast<double>(n_seen_img),
                     static_cast<double>(unseen_correct) /
                         static_cast<double>(n_unseen_img)});
  }
  return curve;
}

EvalSummary summarize(const std::vector<CurvePoint>& curve) {
  check(!curve.empty(), ErrorKind::contract, "summarize: empty curve");
  EvalSummary s;
  for (const CurvePoint& p : curve) {
    s.S = std::max(s.S, p.seen_acc);
    s.U = std::max(s.U, p.unseen_acc);
    const double denom = p.seen_acc + p.unseen_acc;
    if (denom > 0.0)
      s.HM = std::max(s.HM, 2.0 * p.seen_acc * p.unseen_acc / denom);
  }
  // Monotone upper frontier of (seen, unseen) points, then trapezoids.
  std::vector<std::pair<double, double>> pts;
  pts.reserve(curve.size());
  for (const CurvePoint& p : curve) pts.emplace_back(p.seen_acc, p.unseen_acc);
  std::sort(pts.begin(), pts.end());
  std::vector<std::pair<double, double>> uniq;
  for (const auto& p : pts) {
    if (!uniq.empty() && uniq.back().first == p.first)
      uniq.back().second = std::max(uniq.back().second, p.second);
    else
      uniq.push_back(p);
  }
  double running = 0.0;
  for (std::size_t i = uniq.size(); i-- > 0;) {
    running = std::max(running, uniq[i].second);
    uniq[i].second = running;
  }
  double auc = 0.0;
  for (std::size_t i = 0; i + 1 < uniq.size(); ++i)
    auc += (uniq[i + 1].first - uniq[i].first) * 0.5 *
           (uniq[i + 1].second + uniq[i].second);
  s.AUC = auc;
  return s;
}

EvalReport evaluate(const ModelSnapshot& snap, CzslSetting setting, Phase phase,
                    std::optional<double> threshold) {
  snap.validate();
  const CompositionSpace& space = *snap.space;
  if (setting == CzslSetting::open_world)
    check(threshold.has_value(), ErrorKind::config,
          "open-world evaluation requires a feasibility threshold");
  else
    check(!threshold.has_value(), ErrorKind::config,
          "feasibility threshold only applies to the open-world setting");

  const std::vector<Pair> targets = target_set(space, setting, phase);
  check(!targets.empty(), ErrorKind::contract, "empty target set for ",
        to_string(setting), "/", to_string(phase));

  const std::set<Pair> train_set(space.train_pairs.begin(),
                                 space.train_pairs.end());
  std::vector<bool> seen_flags(targets.size());
  for (std::size_t j = 0; j < targets.size(); ++j)
    seen_flags[j] = train_set.count(targets[j]) > 0;

  std::vector<bool> keep(targets.size(), true);
  if (setting == CzslSetting::open_world) {
    const FeasibilityScores feas =
        feasibility_scores(space, snap.prompt.soft_embedding.tensor);
    for (std::size_t j = 0; j < targets.size(); ++j)
      if (!seen_flags[j] && feas.at(targets[j]) < *threshold) keep[j] = false;
  }

  std::map<Pair, idx_t> target_index;
  for (std::size_t j = 0; j < targets.size(); ++j)
    target_index.emplace(targets[j], static_cast<idx_t>(j));

  std::vector<std::string> image_ids;
  std::vector<idx_t> truth;
  for (const Sample& s : space.samples(phase)) {
    if (setting == CzslSetting::standard && train_set.count(s.pair) > 0)
      continue;  // standard setting scores only unseen-labeled images
    auto it = target_index.find(s.pair);
    check(it != target_index.end(), ErrorKind::data, "sample '", s.image_id,
          "' labeled with pair outside the target set");
    image_ids.push_back(s.image_id);
    truth.push_back(it->second);
  }
  check(!image_ids.empty(), ErrorKind::contract, "no images to evaluate for ",
        to_string(setting), "/", to_string(phase));

  const Tensor scores = score_matrix(snap, image_ids, targets, &keep);

  EvalReport report;
  report.setting = setting;
  report.phase = phase;
  report.threshold = threshold;
  if (setting == CzslSetting::standard) {
    // No seen pairs in the target set, so there is nothing to sweep: report
    // the plain unseen accuracy as a single curve point.
    idx_t correct = 0;
    const auto& sv = scores.values();
    const idx_t P = scores.cols();
    for (idx_t i = 0; i < scores.rows(); ++i) {
      const double* row = &sv[static_cast<std::size_t>(i * P)];
      idx_t best = 0;
      for (idx_t j = 1; j < P; ++j)
        if (row[j] > row[best]) best = j;
      if (best == truth[static_cast<std::size_t>(i)]) ++correct;
    }
    const double acc =
        static_cast<double>(correct) / static_cast<double>(scores.rows());
    report.curve.push_back({0.0, 0.0, acc});
    report.U = acc;
    return report;
  }

  report.curve = bias_sweep(scores, truth, seen_flags);
  const EvalSummary s = summarize(report.curve);
  report.S = s.S;
  report.U = s.U;
  report.HM = s.HM;
  report.AUC = s.AUC;
  return report;
}

std::string report_to_text(const EvalReport& report) {
  std::string out;
  out += "setting=" + to_string(report.setting) + "\n";
  out += "S=" + fmt_double(report.S) + "\n";
  out += "U=" + fmt_double(report.U) + "\n";
  out += "HM=" + fmt_double(report.HM) + "\n";
  out += "AUC=" + fmt_double(report.AUC) + "\n";
  out += "threshold=";
  out += report.threshold ? fmt_double(*report.threshold) : "none";
  out += "\n";
  for (const CurvePoint& p : report.curve) {
    out += "curve=" + fmt_double(p.bias) + "," + fmt_double(p.seen_acc) + "," +
           fmt_double(p.unseen_acc) + "\n";
  }
  out += "config.phase=" + to_string(report.phase) + "\n";
  if (!report.config_echo.empty()) {
    std::istringstream is(report.config_echo);
    std::string line;
    while (std::getline(is, line))
      if (!line.empty()) out += "config." + line + "\n";
  }
  return out;
}

}  // namespace czsl
