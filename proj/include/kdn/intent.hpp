#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "kdn/netmodel.hpp"
#include "kdn/simulator.hpp"

namespace kdn {

// Intent language:
//
//   intent     := objective constraint* ;
//   objective  := "minimize" ("mean_delay" | "max_delay") ;
//   constraint := "delay" "(" id "->" id ")" ("<" | "<=") number unit
//               | "util" "(" id ")" ("<" | "<=") number ;
//   unit       := "ms" | "s" ;
//
// '#' starts a line comment. Link ids have the form <src>_<dst>.

enum class ObjectiveKind { mean_delay, max_delay };
enum class ConstraintKind { pair_delay, link_util };
enum class Strictness { less, less_equal };

struct Constraint {
  ConstraintKind kind = ConstraintKind::pair_delay;
  std::size_t pair = 0;  // pair index, for pair_delay
  LinkId link = 0;       // directed link, for link_util
  double bound = 0.0;    // seconds or utilization ratio
  Strictness strictness = Strictness::less;

  bool operator==(const Constraint&) const = default;
};

struct Intent {
  ObjectiveKind objective = ObjectiveKind::mean_delay;
  std::vector<Constraint> constraints;

  bool operator==(const Intent&) const = default;
};

// Throws ParseError (syntax, unknown_identifier or duplicate_objective).
Intent parse_intent(std::string_view text, const Topology& topo);

// Canonical text; parse_intent(to_text(i)) == i.
std::string to_text(const Intent& intent, const Topology& topo);

inline constexpr double kDefaultPenaltyWeight = 1e6;
inline constexpr double kInfeasiblePenalty = 1e-6;

struct ConstraintVerdict {
  double metric = 0.0;
  double bound = 0.0;
  double penalty = 0.0;
  bool satisfied = false;
};

struct ObjectiveValue {
  double base = 0.0;
  double penalty = 0.0;
  double total = 0.0;
  std::vector<ConstraintVerdict> verdicts;
};

// Scalar objective: base(mean or max pair delay) plus weighted squared hinge
// penalties on each constraint.
struct ObjectiveSpec {
  ObjectiveKind objective = ObjectiveKind::mean_delay;
  std::vector<Constraint> constraints;
  std::vector<double> weights;

  ObjectiveValue evaluate(const PathDelayVector& delays, const LinkLoadReport& loads) const;
};

ObjectiveSpec render(const Intent& intent, double penalty_weight = kDefaultPenaltyWeight);

}  // namespace kdn
