#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace cadmr {

// Per-step objective decomposition: total = mse + lambda_tc * tc + l2_weights
// + l2_kernel (the lambda weights are already folded into each component).
struct LossBreakdown {
  double total = 0.0;
  double mse = 0.0;
  double tc = 0.0;
  double l2_weights = 0.0;
  double l2_kernel = 0.0;
};

using LossTrace = std::vector<LossBreakdown>;

inline void save_trace_csv(const std::filesystem::path& path, const LossTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path.string());
  out.precision(17);
  out << "epoch,total,mse,tc,l2w,l2k\n";
  for (std::size_t e = 0; e < trace.size(); ++e) {
    const auto& b = trace[e];
    out << e << ',' << b.total << ',' << b.mse << ',' << b.tc << ',' << b.l2_weights << ','
        << b.l2_kernel << '\n';
  }
}

}  // namespace cadmr
