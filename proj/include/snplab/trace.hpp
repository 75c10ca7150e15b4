#pragma once

#include <string>
#include <vector>

#include "term.hpp"

namespace snplab {

struct ActionEvent {
  std::string label;
  std::vector<Term> args;
  std::size_t step = 0;

  bool operator==(const ActionEvent&) const = default;
};

using Trace = std::vector<ActionEvent>;

inline ActionEvent ev(std::string label, std::vector<Term> args) {
  return ActionEvent{std::move(label), std::move(args), 0};
}

inline std::string event_str(const ActionEvent& e) {
  std::string s = std::to_string(e.step) + " " + e.label + "(";
  for (std::size_t i = 0; i < e.args.size(); ++i) {
    if (i) s += ", ";
    e.args[i].write(s);
  }
  return s + ")";
}

}  // namespace snplab
