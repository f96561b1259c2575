#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "perq/costing.hpp"
#include "perq/dataset.hpp"
#include "perq/prediction.hpp"

namespace perq {

/// An external trainer: a shell command template holding each of
/// {train} {val} {test} {out} exactly once.
struct BackendDescriptor {
  std::string backend_id;
  std::string invoke;
  double timeout_s = 3600.0;

  void validate() const;
};

class SchemaViolation : public ValidationError {
 public:
  explicit SchemaViolation(const std::string& message) : ValidationError("SchemaViolation", message) {}
};

class BackendError : public Error {
 public:
  BackendError(std::string code, const std::string& message) : Error(ErrorKind::Backend, std::move(code), message) {}
};

struct BackendResult {
  std::vector<Prediction> predictions;  // in file order
  CostRecord cost;
};

/// POSIX single-quoting for paths substituted into the command.
std::string shell_quote(const std::string& s);

/// Command with placeholders replaced by quoted paths.
std::string render_invocation(const BackendDescriptor& desc, const SplitFiles& splits,
                              const std::filesystem::path& out);

/// Runs the backend in its own process group through /bin/sh and validates
/// its predictions against the test split. On timeout the group is killed and
/// any partial output is removed (BackendTimeout). Nonzero exit gives
/// BackendNonZeroExit; bad output gives SchemaViolation. Peak memory from an
/// optional cost.json beside `out` is folded into the returned CostRecord.
BackendResult run_backend(const BackendDescriptor& desc, const SplitFiles& splits, const std::filesystem::path& out,
                          int num_labels);

/// Checks that predictions cover exactly `expected_ids`, each once.
void validate_prediction_ids(const std::vector<Prediction>& preds, const std::vector<std::string>& expected_ids);

}  // namespace perq
