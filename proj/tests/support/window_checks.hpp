#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ctxlstm/dataset.hpp"

namespace checks {

// Returns an empty string when every window invariant holds, otherwise the
// first violation found.
inline std::string window_violation(const ctxlstm::TrajectoryDataset& ds,
                                    const std::vector<ctxlstm::SceneWindow>& windows,
                                    const ctxlstm::WindowSpec& spec) {
  std::map<std::pair<int, int>, ctxlstm::Point> at;
  for (const auto& r : ds.records) at[{r.frame, r.agent}] = {r.x, r.y};
  for (const auto& w : windows) {
    const std::string where = "window@" + std::to_string(w.start);
    if (w.t_obs != spec.t_obs || w.t_pred != spec.t_pred) return where + ": wrong lengths";
    if (w.start % spec.stride != 0) return where + ": start off the stride";
    if (w.full_count() == 0) return where + ": no full agent";
    for (const auto& a : w.agents) {
      if (a.pos.size() != static_cast<std::size_t>(w.length()) || a.present.size() != a.pos.size()) {
        return where + ": track length";
      }
      bool all = true;
      for (int t = 0; t < w.length(); ++t) {
        const auto it = at.find({w.start + t, a.id});
        const bool here = it != at.end();
        if (here != static_cast<bool>(a.present[static_cast<std::size_t>(t)])) {
          return where + ": presence mismatch for agent " + std::to_string(a.id);
        }
        if (here && !(it->second == a.pos[static_cast<std::size_t>(t)])) {
          return where + ": position mismatch for agent " + std::to_string(a.id);
        }
        all = all && here;
      }
      if (all != a.full) return where + ": full flag wrong for agent " + std::to_string(a.id);
    }
  }
  return {};
}

}  // namespace checks
