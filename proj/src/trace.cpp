#include "stackvs/trace.hpp"

#include <cstdio>

#include "binary_io.hpp"

namespace stackvs {

std::string trace_csv(const AttentionTrace& trace) {
  std::string out = "stage,t,branch,index,weight,ratio\n";
  char line[128];
  auto rows = [&](const TraceEntry& e, char branch, const Vectord& w) {
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      std::snprintf(line, sizeof line, "%zu,%zu,%c,%td,%.17g,%.17g\n", e.stage + 1, e.t, branch,
                    static_cast<std::ptrdiff_t>(k), w[k], e.ratio);
      out += line;
    }
  };
  for (const auto& e : trace.entries) {
    rows(e, 'v', e.alpha_v);
    rows(e, 's', e.alpha_s);
  }
  return out;
}

void export_trace(const AttentionTrace& trace, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  detail::write_text(path, trace_csv(trace));
}

}  // namespace stackvs
