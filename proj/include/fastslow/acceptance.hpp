#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "fastslow/experiments.hpp"

namespace fastslow {

struct AcceptanceOptions {
    unsigned threads = 1;
    std::uint64_t seed = 7;
    double scale = 1.0;  // multiplies Monte Carlo sample sizes (floor 100)
    double slack_c = 1.0;
    LimitOptions limit;
    double determinism_scale = 0.1;  // sample-size scale for the repeated runs of criterion 11
};

struct CriterionResult {
    std::string id;
    std::string title;
    bool pass = false;
    std::string summary;
    nlohmann::json detail;
    double seconds = 0.0;
    double budget = 0.0;  // seconds; 0 for no budget

    bool within_budget() const { return budget <= 0.0 || seconds <= budget; }
};

/// "1" .. "11".
std::vector<std::string> criterion_ids();
/// Checks relevant to one fixture: LIN, CBD, CPL or DRIFT.
std::vector<std::string> fixture_suite(const std::string& fixture);

/// Runs checks by id, sharing limit models and ensembles between them.
class AcceptanceRunner {
  public:
    explicit AcceptanceRunner(AcceptanceOptions opt);
    CriterionResult run(const std::string& id);
    std::vector<CriterionResult> run_all(const std::vector<std::string>& ids);

  private:
    const LimitModel& limit(const std::string& fixture);
    const Ensemble& ensemble(const std::string& fixture, double eps, std::size_t N, int points);
    std::size_t scaled(std::size_t N) const;
    void evaluate(const std::string& id, CriterionResult& r);

    AcceptanceOptions opt_;
    std::map<std::string, LimitModel> limits_;
    std::map<std::string, std::unique_ptr<Ensemble>> ensembles_;
};

/// Deterministic report: ids, titles, pass flags, summaries and details; no timings.
nlohmann::json acceptance_report(const std::vector<CriterionResult>& results);

}  // namespace fastslow
