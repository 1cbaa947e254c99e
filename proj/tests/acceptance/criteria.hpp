#pragma once

#include <functional>
#include <string>
#include <vector>

namespace acceptance {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Pinned tolerances.
inline constexpr double kAuditSecondsLimit = 1.0;
inline constexpr double kRoundTripTolerance = 1e-6;
inline constexpr double kGradientRelTolerance = 1e-4;
inline constexpr double kFiniteDifferenceStep = 1e-3;
inline constexpr double kInterpreterRelTolerance = 1e-4;  // float forward vs double oracle
inline constexpr double kMultiscaleSecondsLimit = 60.0;
inline constexpr int kToyTrainingSteps = 50;
inline constexpr int kToyTrainingSeeds = 10;
inline constexpr int kToyTrainingRequired = 9;

CriterionResult audit_correctness();        // 1
CriterionResult budget_report();            // 2
CriterionResult anchor_machinery();         // 3
CriterionResult matching_and_ohem();        // 4
CriterionResult loss_verification();        // 5
CriterionResult executor_oracle();          // 6
CriterionResult inference_protocol();       // 7
CriterionResult evaluation_protocol();      // 8
CriterionResult toy_training();             // 9

struct Criterion {
  int id;
  std::function<CriterionResult()> run;
};
std::vector<Criterion> all_criteria();

// Runs one criterion, timing it and turning escaped exceptions into failures.
CriterionResult run_guarded(const Criterion& c);
std::string format_line(const CriterionResult& r);

// Per-seed loss traces of the toy-training harness.
std::vector<std::vector<double>> toy_training_traces(int seeds, int steps);

}  // namespace acceptance
