#pragma once

// CSV output. Header row, dot decimal, RFC-4180 quoting; numbers use %.17g
// so traces can be re-accumulated exactly. Vector-valued cells hold the
// components separated by spaces.

#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ncsim/linalg.hpp"
#include "ncsim/scenario.hpp"
#include "ncsim/sim.hpp"

namespace ncsim::io {

inline std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string num(double v) { return format_double(v); }

inline std::string num(const Vector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += format_double(v(i));
  }
  return s;
}

inline std::string opt(const std::optional<double>& v) { return v ? num(*v) : "NA"; }

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}

  CsvWriter& row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) os_ << ',';
      os_ << quote(fields[i]);
    }
    os_ << "\r\n";
    return *this;
  }

 private:
  std::ostream& os_;
};

inline const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> cols{"episode", "loop", "group", "k",   "tick", "x",    "u",
                                             "gamma",   "delta", "attempts", "xhat", "err", "pred_err",
                                             "tau",     "d",     "stage_cost"};
  return cols;
}

inline void write_trace_header(std::ostream& os) { CsvWriter(os).row(trace_columns()); }

inline void write_trace_rows(std::ostream& os, std::size_t episode, std::span<const LoopTrace> traces) {
  CsvWriter w(os);
  for (const auto& tr : traces) {
    for (const auto& s : tr.steps) {
      w.row({std::to_string(episode), std::to_string(tr.loop), tr.group, std::to_string(s.k), std::to_string(s.tick),
             num(s.x), num(s.u), s.gamma ? "1" : "0", s.delta ? "1" : "0", std::to_string(s.transmissions),
             num(s.xhat), num(s.err), num(s.pred_err), std::to_string(s.tau),
             std::to_string(static_cast<long>(s.k) - s.tau), num(s.stage_cost)});
    }
  }
}

inline void write_slot_log(std::ostream& os, std::size_t episode, std::span<const SlotLogRow> rows,
                           bool header = true) {
  CsvWriter w(os);
  if (header) w.row({"episode", "tick", "contender", "slot", "attempt", "result"});
  for (const auto& r : rows)
    w.row({std::to_string(episode), std::to_string(r.tick), std::to_string(r.contender), std::to_string(r.slot),
           std::to_string(r.attempt), to_string(r.result)});
}

inline void write_summary(std::ostream& os, const MonteCarloReport& rep) {
  CsvWriter w(os);
  w.row({"loop", "group", "scheduler", "episodes", "J", "J_se", "transmissions", "J_lambda", "J_DP", "mse",
         "bound_probability", "estimate_bound_probability"});
  for (const auto& l : rep.loops)
    w.row({std::to_string(l.loop), l.group, l.scheduler, std::to_string(l.cost.episodes), num(l.cost.cost),
           opt(l.cost.cost_se), num(l.cost.transmissions), num(l.cost.penalized_cost), opt(l.cost.jdp), num(l.mse),
           l.has_bound ? num(l.bound_probability) : "NA", l.has_bound ? num(l.estimate_bound_probability) : "NA"});
}

inline void write_group_summary(std::ostream& os, const MonteCarloReport& rep) {
  CsvWriter w(os);
  w.row({"group", "loops", "episodes", "J", "J_se", "transmissions", "J_DP"});
  for (const auto& g : rep.groups)
    w.row({g.group, std::to_string(g.loops), std::to_string(rep.episodes), num(g.cost), opt(g.cost_se),
           num(g.transmissions), opt(g.jdp)});
}

// The first two columns (epsilon, J) are the cost-versus-threshold curve.
inline void write_sweep(std::ostream& os, const SweepResult& sweep) {
  CsvWriter w(os);
  w.row({"epsilon", "J", "J_se", "J_DP", "bound_probability", "estimate_bound_probability", "request_rate",
         "delivery_rate", "collision_rate",
         "drop_rate"});
  for (const auto& r : sweep.rows)
    w.row({num(r.epsilon), num(r.cost), num(r.cost_se), opt(r.jdp), num(r.bound_probability),
           num(r.estimate_bound_probability), num(r.request_rate),
           num(r.delivery_rate), num(r.collision_rate), num(r.drop_rate)});
}

inline void write_riccati(std::ostream& os, const RiccatiSolution& ric) {
  CsvWriter w(os);
  w.row({"k", "S", "L"});
  for (std::size_t k = 0; k <= ric.horizon; ++k) {
    auto flat = [](const Matrix& m) {
      std::string s;
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
          if (!s.empty()) s += ' ';
          s += format_double(m(r, c));
        }
      return s;
    };
    w.row({std::to_string(k), flat(ric.S[k]), k < ric.horizon ? flat(ric.L[k]) : "NA"});
  }
}

}  // namespace ncsim::io
