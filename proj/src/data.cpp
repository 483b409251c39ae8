#include "czsl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "czsl/rng.hpp"

namespace czsl {

namespace fs = std::filesystem;

CzslSetting parse_setting(const std::string& s) {
  if (s == "standard") return CzslSetting::standard;
  if (s == "generalized") return CzslSetting::generalized;
  if (s == "open_world") return CzslSetting::open_world;
  fail(ErrorKind::config, "unknown setting '", s,
       "' (expected standard|generalized|open_world)");
}

std::string to_string(CzslSetting s) {
  switch (s) {
    case CzslSetting::standard: return "standard";
    case CzslSetting::generalized: return "generalized";
    case CzslSetting::open_world: return "open_world";
  }
  return "?";
}

std::string to_string(Phase p) { return p == Phase::val ? "val" : "test"; }

std::optional<idx_t> CompositionSpace::attr_index(const std::string& name) const {
  auto it = std::lower_bound(attributes.begin(), attributes.end(), name);
  if (it != attributes.end() && *it == name)
    return static_cast<idx_t>(it - attributes.begin());
  return std::nullopt;
}

std::optional<idx_t> CompositionSpace::obj_index(const std::string& name) const {
  auto it = std::lower_bound(objects.begin(), objects.end(), name);
  if (it != objects.end() && *it == name)
    return static_cast<idx_t>(it - objects.begin());
  return std::nullopt;
}

std::string CompositionSpace::pair_name(const Pair& p) const {
  return attributes[static_cast<std::size_t>(p.attr)] + " " +
         objects[static_cast<std::size_t>(p.obj)];
}

bool CompositionSpace::is_seen(const Pair& p) const {
  return std::find(train_pairs.begin(), train_pairs.end(), p) !=
         train_pairs.end();
}

namespace {

const char* const kPairFiles[] = {"train_pairs.txt", "val_seen_pairs.txt",
                                  "val_unseen_pairs.txt", "test_seen_pairs.txt",
                                  "test_unseen_pairs.txt"};

struct RawPair {
  std::string attr, obj;
};

std::vector<RawPair> read_pair_file(const std::string& path) {
  std::ifstream is(path);
  check(is.good(), ErrorKind::io, "cannot open split file '", path, "'");
  std::vector<RawPair> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    RawPair p;
    std::string extra;
    check(static_cast<bool>(ls >> p.attr >> p.obj), ErrorKind::data,
          path, ":", lineno, ": malformed pair line '", line, "'");
    check(!(ls >> extra), ErrorKind::data, path, ":", lineno,
          ": trailing token '", extra, "' on pair line");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

CompositionSpace load_splits(const std::string& dir) {
  std::vector<std::vector<RawPair>> raw;
  for (const char* f : kPairFiles)
    raw.push_back(read_pair_file((fs::path(dir) / f).string()));

  CompositionSpace space;
  {
    std::set<std::string> attrs, objs;
    for (const auto& file : raw)
      for (const RawPair& p : file) {
        attrs.insert(p.attr);
        objs.insert(p.obj);
      }
    space.attributes.assign(attrs.begin(), attrs.end());
    space.objects.assign(objs.begin(), objs.end());
  }

  auto to_pairs = [&](const std::vector<RawPair>& file,
                      const char* fname) -> std::vector<Pair> {
    std::vector<Pair> out;
    std::set<Pair> dedup;
    for (const RawPair& rp : file) {
      Pair p{*space.attr_index(rp.attr), *space.obj_index(rp.obj)};
      check(dedup.insert(p).second, ErrorKind::data, fname, ": duplicate pair '",
            rp.attr, " ", rp.obj, "'");
      out.push_back(p);
    }
    return out;
  };
  space.train_pairs = to_pairs(raw[0], kPairFiles[0]);
  space.val_seen_pairs = to_pairs(raw[1], kPairFiles[1]);
  space.val_unseen_pairs = to_pairs(raw[2], kPairFiles[2]);
  space.test_seen_pairs = to_pairs(raw[3], kPairFiles[3]);
  space.test_unseen_pairs = to_pairs(raw[4], kPairFiles[4]);

  const std::set<Pair> train_set(space.train_pairs.begin(),
                                 space.train_pairs.end());
  auto require_subset = [&](const std::vector<Pair>& pairs, const char* fname) {
    for (const Pair& p : pairs)
      check(train_set.count(p) > 0, ErrorKind::data, fname, ": pair '",
            space.pair_name(p), "' declared seen but missing from train_pairs");
  };
  auto require_disjoint = [&](const std::vector<Pair>& pairs, const char* fname) {
    for (const Pair& p : pairs)
      check(train_set.count(p) == 0, ErrorKind::data, fname, ": pair '",
            space.pair_name(p),
            "' declared unseen but present in train_pairs (seen and unseen "
            "pair sets must be disjoint)");
  };
  require_subset(space.val_seen_pairs, kPairFiles[1]);
  require_disjoint(space.val_unseen_pairs, kPairFiles[2]);
  require_subset(space.test_seen_pairs, kPairFiles[3]);
  require_disjoint(space.test_unseen_pairs, kPairFiles[4]);

  // Sample manifest.
  const std::string manifest = (fs::path(dir) / "samples.txt").string();
  std::ifstream is(manifest);
  check(is.good(), ErrorKind::io, "cannot open sample manifest '", manifest, "'");
  auto pair_set = [](const std::vector<Pair>& a, const std::vector<Pair>& b) {
    std::set<Pair> s(a.begin(), a.end());
    s.insert(b.begin(), b.end());
    return s;
  };
  const std::set<Pair> val_set = pair_set(space.val_seen_pairs, space.val_unseen_pairs);
  const std::set<Pair> test_set = pair_set(space.test_seen_pairs, space.test_unseen_pairs);
  std::set<std::string> seen_ids;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string id, attr, obj, split, extra;
    check(static_cast<bool>(ls >> id >> attr >> obj >> split), ErrorKind::data,
          manifest, ":", lineno, ": malformed sample line '", line, "'");
    check(!(ls >> extra), ErrorKind::data, manifest, ":", lineno,
          ": trailing token '", extra, "'");
    auto ai = space.attr_index(attr);
    check(ai.has_value(), ErrorKind::data, manifest, ":", lineno,
          ": unknown attribute '", attr, "'");
    auto oi = space.obj_index(obj);
    check(oi.has_value(), ErrorKind::data, manifest, ":", lineno,
          ": unknown object '", obj, "'");
    check(seen_ids.insert(id).second, ErrorKind::data, manifest, ":", lineno,
          ": duplicate image id '", id, "'");
    const Pair p{*ai, *oi};
    Sample sample{id, p};
    if (split == "train") {
      check(train_set.count(p) > 0, ErrorKind::data, manifest, ":", lineno,
            ": train sample labeled with non-train pair '", attr, " ", obj, "'");
      space.train_samples.push_back(std::move(sample));
    } else if (split == "val") {
      check(val_set.count(p) > 0, ErrorKind::data, manifest, ":", lineno,
            ": val sample labeled with pair outside the val pair sets");
      space.val_samples.push_back(std::move(sample));
    } else if (split == "test") {
      check(test_set.count(p) > 0, ErrorKind::data, manifest, ":", lineno,
            ": test sample labeled with pair outside the test pair sets");
      space.test_samples.push_back(std::move(sample));
    } else {
      fail(ErrorKind::data, manifest, ":", lineno, ": unknown split '", split,
           "' (expected train|val|test)");
    }
  }
  return space;
}

void save_splits(const CompositionSpace& space, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  auto write_pairs = [&](const std::vector<Pair>& pairs, const char* fname) {
    const std::string path = (fs::path(dir) / fname).string();
    std::ofstream os(path);
    check(os.good(), ErrorKind::io, "cannot write '", path, "'");
    for (const Pair& p : pairs) os << space.pair_name(p) << "\n";
    os.flush();
    check(os.good(), ErrorKind::io, "write failed for '", path, "'");
  };
  write_pairs(space.train_pairs, kPairFiles[0]);
  write_pairs(space.val_seen_pairs, kPairFiles[1]);
  write_pairs(space.val_unseen_pairs, kPairFiles[2]);
  write_pairs(space.test_seen_pairs, kPairFiles[3]);
  write_pairs(space.test_unseen_pairs, kPairFiles[4]);

  const std::string manifest = (fs::path(dir) / "samples.txt").string();
  std::ofstream os(manifest);
  check(os.good(), ErrorKind::io, "cannot write '", manifest, "'");
  auto dump = [&](const std::vector<Sample>& samples, const char* split) {
    for (const Sample& s : samples)
      os << s.image_id << " " << space.pair_name(s.pair) << " " << split << "\n";
  };
  dump(space.train_samples, "train");
  dump(space.val_samples, "val");
  dump(space.test_samples, "test");
  os.flush();
  check(os.good(), ErrorKind::io, "write failed for '", manifest, "'");
}

std::vector<Pair> target_set(const CompositionSpace& space, CzslSetting setting,
                             Phase phase) {
  std::vector<Pair> out;
  if (setting == CzslSetting::open_world) {
    out.reserve(static_cast<std::size_t>(space.num_attrs() * space.num_objs()));
    for (idx_t a = 0; a < space.num_attrs(); ++a)
      for (idx_t o = 0; o < space.num_objs(); ++o) out.push_back({a, o});
    return out;
  }
  const auto& seen =
      phase == Phase::val ? space.val_seen_pairs : space.test_seen_pairs;
  const auto& unseen =
      phase == Phase::val ? space.val_unseen_pairs : space.test_unseen_pairs;
  if (setting == CzslSetting::generalized)
    out.insert(out.end(), seen.begin(), seen.end());
  out.insert(out.end(), unseen.begin(), unseen.end());
  std::sort(out.begin(), out.end());
  return out;
}

SynthOutput synth_generate(const SynthConfig& cfg) {
  check(cfg.num_attrs >= 2 && cfg.num_objs >= 2, ErrorKind::config,
        "synthetic space needs at least 2 attributes and 2 objects");
  check(cfg.d_img > 0, ErrorKind::config, "d_img must be positive");
  check(cfg.noise_sigma >= 0.0, ErrorKind::config, "noise sigma must be >= 0");
  check(cfg.images_per_pair >= 1, ErrorKind::config,
        "images_per_pair must be >= 1");
  check(cfg.unseen_fraction > 0.0 && cfg.unseen_fraction < 1.0,
        ErrorKind::config, "unseen fraction must lie in (0, 1), got ",
        cfg.unseen_fraction);

  Rng root(cfg.seed);
  SynthOutput out;
  CompositionSpace& space = out.space;

  auto name_of = [](const char* prefix, idx_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%03lld", prefix,
                  static_cast<long long>(i));
    return std::string(buf);
  };
  for (idx_t a = 0; a < cfg.num_attrs; ++a)
    space.attributes.push_back(name_of("attr", a));
  for (idx_t o = 0; o < cfg.num_objs; ++o)
    space.objects.push_back(name_of("obj", o));

  // Prototypes with unit expected norm.
  const double proto_std = 1.0 / std::sqrt(static_cast<double>(cfg.d_img));
  Rng proto_rng = root.split(1);
  std::vector<std::vector<double>> attr_proto, obj_proto;
  for (idx_t a = 0; a < cfg.num_attrs; ++a) {
    std::vector<double> p(static_cast<std::size_t>(cfg.d_img));
    for (double& x : p) x = proto_rng.normal(0.0, proto_std);
    attr_proto.push_back(std::move(p));
  }
  for (idx_t o = 0; o < cfg.num_objs; ++o) {
    std::vector<double> q(static_cast<std::size_t>(cfg.d_img));
    for (double& x : q) x = proto_rng.normal(0.0, proto_std);
    obj_proto.push_back(std::move(q));
  }

  // Hold out the unseen fraction while every primitive keeps a seen pair.
  const idx_t total = cfg.num_attrs * cfg.num_objs;
  const idx_t want_unseen = static_cast<idx_t>(
      std::llround(cfg.unseen_fraction * static_cast<double>(total)));
  check(want_unseen >= 1, ErrorKind::config,
        "unseen fraction too small: no pair would be held out");
  std::vector<Pair> grid;
  for (idx_t a = 0; a < cfg.num_attrs; ++a)
    for (idx_t o = 0; o < cfg.num_objs; ++o) grid.push_back({a, o});
  Rng split_rng = root.split(2);
  shuffle(grid, split_rng);
  std::vector<idx_t> attr_seen(static_cast<std::size_t>(cfg.num_attrs),
                               cfg.num_objs);
  std::vector<idx_t> obj_seen(static_cast<std::size_t>(cfg.num_objs),
                              cfg.num_attrs);
  std::vector<Pair> unseen;
  for (const Pair& p : grid) {
    if (static_cast<idx_t>(unseen.size()) == want_unseen) break;
    if (attr_seen[static_cast<std::size_t>(p.attr)] <= 1 ||
        obj_seen[static_cast<std::size_t>(p.obj)] <= 1)
      continue;
    --attr_seen[static_cast<std::size_t>(p.attr)];
    --obj_seen[static_cast<std::size_t>(p.obj)];
    unseen.push_back(p);
  }
  check(static_cast<idx_t>(unseen.size()) == want_unseen, ErrorKind::data,
        "cannot hold out ", want_unseen,
        " pairs while keeping every primitive in a seen pair");
  std::set<Pair> unseen_set(unseen.begin(), unseen.end());
  for (idx_t a = 0; a < cfg.num_attrs; ++a)
    for (idx_t o = 0; o < cfg.num_objs; ++o)
      if (unseen_set.count({a, o}) == 0) space.train_pairs.push_back({a, o});
  for (std::size_t i = 0; i < unseen.size(); ++i) {
    if (i % 2 == 0)
      space.val_unseen_pairs.push_back(unseen[i]);
    else
      space.test_unseen_pairs.push_back(unseen[i]);
  }
  std::sort(space.val_unseen_pairs.begin(), space.val_unseen_pairs.end());
  std::sort(space.test_unseen_pairs.begin(), space.test_unseen_pairs.end());
  space.val_seen_pairs = space.train_pairs;
  space.test_seen_pairs = space.train_pairs;

  // Images. Seen pairs split train/val/test; an unseen pair's images all go to
  // its own phase.
  out.features.d_img = cfg.d_img;
  Rng noise_rng = root.split(3);
  const idx_t n = cfg.images_per_pair;
  idx_t n_val = 0, n_test = 0;
  if (n >= 3) {
    n_val = std::max<idx_t>(1, (n * 15) / 100);
    n_test = n_val;
  }
  const idx_t n_train = n - n_val - n_test;

  for (idx_t a = 0; a < cfg.num_attrs; ++a) {
    for (idx_t o = 0; o < cfg.num_objs; ++o) {
      const Pair p{a, o};
      const bool seen = unseen_set.count(p) == 0;
      const bool unseen_in_val =
          !seen && std::binary_search(space.val_unseen_pairs.begin(),
                                      space.val_unseen_pairs.end(), p);
      for (idx_t i = 0; i < n; ++i) {
        std::vector<double> feat(static_cast<std::size_t>(cfg.d_img));
        for (idx_t c = 0; c < cfg.d_img; ++c) {
          const std::size_t ci = static_cast<std::size_t>(c);
          feat[ci] = attr_proto[static_cast<std::size_t>(a)][ci] +
                     obj_proto[static_cast<std::size_t>(o)][ci];
          if (cfg.noise_sigma > 0.0)
            feat[ci] += noise_rng.normal(0.0, cfg.noise_sigma);
        }
        char idbuf[96];
        std::snprintf(idbuf, sizeof(idbuf), "img_%s_%s_%03lld",
                      space.attributes[static_cast<std::size_t>(a)].c_str(),
                      space.objects[static_cast<std::size_t>(o)].c_str(),
                      static_cast<long long>(i));
        const std::string id(idbuf);
        out.features.add(id, std::move(feat));
        Sample s{id, p};
        if (seen) {
          if (i < n_train)
            space.train_samples.push_back(std::move(s));
          else if (i < n_train + n_val)
            space.val_samples.push_back(std::move(s));
          else
            space.test_samples.push_back(std::move(s));
        } else if (unseen_in_val) {
          space.val_samples.push_back(std::move(s));
        } else {
          space.test_samples.push_back(std::move(s));
        }
      }
    }
  }
  return out;
}

}  // namespace czsl
