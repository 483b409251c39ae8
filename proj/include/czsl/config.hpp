#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "czsl/tensor.hpp"

namespace czsl {

// Merged run configuration: built-in defaults, then config-file keys, then
// flag overrides. `out` and `resume` are invocation plumbing and stay out of
// the provenance echo so reruns and resumed runs stay byte-comparable.
struct RunConfig {
  std::uint64_t seed = 1;
  idx_t epochs = 30;
  idx_t batch_size = 64;
  double lr = 0.1;
  std::string optimizer = "sgd";    // sgd|adam
  std::string schedule = "constant";  // constant|cosine
  std::string mode = "promptcompvl";
  double tau = 0.01;
  idx_t prompt_len = 3;
  idx_t context_len = 8;
  idx_t dim = 64;
  idx_t blocks = 2;
  idx_t heads = 4;
  idx_t checkpoint_every = 1;
  std::string data_dir;
  std::string features;

  std::string out;     // not echoed
  std::string resume;  // not echoed

  void validate_train() const;
};

// Plain key=value lines; '#' comments and blank lines ignored.
std::map<std::string, std::string> parse_config_file(const std::string& path);

// Applies recognized keys onto cfg; unknown keys are config errors.
void apply_config_entries(const std::map<std::string, std::string>& entries,
                          RunConfig& cfg);

// Deterministic provenance block: one sorted key=value line per echoed field.
std::string config_echo(const RunConfig& cfg);

// Parses an echo block back into a config (used when loading checkpoints).
RunConfig config_from_echo(const std::string& echo);

}  // namespace czsl
