#include "czsl/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "czsl/error.hpp"

namespace czsl {

namespace {

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  check(end && *end == '\0' && !v.empty(), ErrorKind::config, "key '", key,
        "': expected a number, got '", v, "'");
  return x;
}

idx_t parse_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  check(end && *end == '\0' && !v.empty(), ErrorKind::config, "key '", key,
        "': expected an integer, got '", v, "'");
  return static_cast<idx_t>(x);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  check(end && *end == '\0' && !v.empty(), ErrorKind::config, "key '", key,
        "': expected an unsigned integer, got '", v, "'");
  return static_cast<std::uint64_t>(x);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::validate_train() const {
  check(epochs > 0, ErrorKind::config, "epochs must be positive");
  check(batch_size > 0, ErrorKind::config, "batch_size must be positive");
  check(lr > 0.0, ErrorKind::config, "lr must be positive");
  check(tau > 0.0, ErrorKind::config, "tau must be positive");
  check(checkpoint_every > 0, ErrorKind::config,
        "checkpoint_every must be positive");
  check(prompt_len >= 0, ErrorKind::config, "prompt_len must be >= 0");
  check(prompt_len + 4 <= context_len, ErrorKind::config, "prompt_len ",
        prompt_len, " does not fit: k + 4 = ", prompt_len + 4,
        " exceeds context_len ", context_len);
  check(dim > 0 && blocks > 0 && heads > 0, ErrorKind::config,
        "dim, blocks and heads must be positive");
  check(dim % heads == 0, ErrorKind::config, "dim ", dim,
        " not divisible by heads ", heads);
  check(schedule == "constant" || schedule == "cosine", ErrorKind::config,
        "unknown schedule '", schedule, "' (expected constant|cosine)");
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream is(path);
  check(is.good(), ErrorKind::io, "cannot open config file '", path, "'");
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    const std::size_t eq = line.find('=', start);
    check(eq != std::string::npos, ErrorKind::config, path, ":", lineno,
          ": expected key=value, got '", line, "'");
    std::string key = line.substr(start, eq - start);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t'))
      key.pop_back();
    std::size_t vs = value.find_first_not_of(" \t");
    value = vs == std::string::npos ? std::string() : value.substr(vs);
    check(!key.empty(), ErrorKind::config, path, ":", lineno, ": empty key");
    check(out.emplace(key, value).second, ErrorKind::config, path, ":", lineno,
          ": duplicate key '", key, "'");
  }
  return out;
}

void apply_config_entries(const std::map<std::string, std::string>& entries,
                          RunConfig& cfg) {
  for (const auto& [key, value] : entries) {
    if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "epochs") cfg.epochs = parse_int(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_int(key, value);
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "optimizer") cfg.optimizer = value;
    else if (key == "schedule") cfg.schedule = value;
    else if (key == "mode") cfg.mode = value;
    else if (key == "tau") cfg.tau = parse_double(key, value);
    else if (key == "prompt_len") cfg.prompt_len = parse_int(key, value);
    else if (key == "context_len") cfg.context_len = parse_int(key, value);
    else if (key == "dim") cfg.dim = parse_int(key, value);
    else if (key == "blocks") cfg.blocks = parse_int(key, value);
    else if (key == "heads") cfg.heads = parse_int(key, value);
    else if (key == "checkpoint_every") cfg.checkpoint_every = parse_int(key, value);
    else if (key == "data_dir") cfg.data_dir = value;
    else if (key == "features") cfg.features = value;
    else fail(ErrorKind::config, "unknown config key '", key, "'");
  }
}

std::string config_echo(const RunConfig& cfg) {
  std::ostringstream os;
  os << "batch_size=" << cfg.batch_size << "\n";
  os << "blocks=" << cfg.blocks << "\n";
  os << "checkpoint_every=" << cfg.checkpoint_every << "\n";
  os << "context_len=" << cfg.context_len << "\n";
  os << "data_dir=" << cfg.data_dir << "\n";
  os << "dim=" << cfg.dim << "\n";
  os << "epochs=" << cfg.epochs << "\n";
  os << "features=" << cfg.features << "\n";
  os << "heads=" << cfg.heads << "\n";
  os << "lr=" << fmt(cfg.lr) << "\n";
  os << "mode=" << cfg.mode << "\n";
  os << "optimizer=" << cfg.optimizer << "\n";
  os << "prompt_len=" << cfg.prompt_len << "\n";
  os << "schedule=" << cfg.schedule << "\n";
  os << "seed=" << cfg.seed << "\n";
  os << "tau=" << fmt(cfg.tau) << "\n";
  return os.str();
}

RunConfig config_from_echo(const std::string& echo) {
  RunConfig cfg;
  std::istringstream is(echo);
  std::map<std::string, std::string> entries;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    check(eq != std::string::npos, ErrorKind::integrity,
          "malformed config echo line '", line, "'");
    entries.emplace(line.substr(0, eq), line.substr(eq + 1));
  }
  apply_config_entries(entries, cfg);
  return cfg;
}

}  // namespace czsl
