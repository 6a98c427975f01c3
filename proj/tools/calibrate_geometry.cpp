// Brute-force calibration of the geometry envelope bands.
//
// Prints width^2 / (s log(2N/s)) over an (s, N) grid and the fraction of
// seeds whose sampled s-sparse deviation stays below 0.5 at
// m = ceil(20 s log(N/s)).

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <vector>

#include "CLI11.hpp"
#include "lassolab/geometry.hpp"

using namespace lassolab;

int main(int argc, char** argv) {
  CLI::App app{"Calibrate geometry envelope constants"};
  std::vector<Index> ss = {1, 2, 5, 10}, Ns = {100, 500, 2000};
  int samples = 100000, seeds = 100, dev_samples = 2000;
  Index dev_N = 500, dev_s = 3;
  unsigned workers = 1;
  std::string out;
  app.add_option("--s", ss, "Sparsity levels");
  app.add_option("--N", Ns, "Ambient dimensions");
  app.add_option("--samples", samples, "Gaussian draws per width estimate");
  app.add_option("--seeds", seeds, "Matrices for the deviation frequency");
  app.add_option("--dev-samples", dev_samples, "Random supports per deviation check");
  app.add_option("--dev-N", dev_N);
  app.add_option("--dev-s", dev_s);
  app.add_option("--workers", workers);
  app.add_option("--out", out, "CSV file (default: stdout)");
  CLI11_PARSE(app, argc, argv);

  std::ofstream file;
  if (!out.empty()) file.open(out);
  std::ostream& os = out.empty() ? std::cout : file;
  os << "quantity,s,N,m,value,std_err,samples\n";
  double lo = 1e300, hi = 0.0;
  std::uint64_t seed = 1;
  for (Index s : ss)
    for (Index N : Ns) {
      if (s > N) continue;
      const WidthEstimate w = gw_sparse_cap(s, N, samples, seed++, workers);
      const double ref = static_cast<double>(s) * std::log(2.0 * N / s);
      const double ratio = w.mean * w.mean / ref;
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
      os << "width_sq_ratio," << s << ',' << N << ",0," << ratio << ',' << 2.0 * w.mean * w.std_error / ref << ','
         << w.samples << '\n';
    }
  const Index m = static_cast<Index>(std::ceil(20.0 * dev_s * std::log(static_cast<double>(dev_N) / dev_s)));
  int below = 0;
  double worst = 0.0;
  for (int k = 0; k < seeds; ++k) {
    const DeviationResult d =
        deviation_check(make_matrix(m, dev_N, Ensemble::gaussian, 5000 + k), dev_s, dev_samples, k);
    below += d.value < 0.5;
    worst = std::max(worst, d.value);
  }
  os << "deviation_below_half_fraction," << dev_s << ',' << dev_N << ',' << m << ','
     << static_cast<double>(below) / seeds << ",0," << seeds << '\n';
  os << "deviation_worst," << dev_s << ',' << dev_N << ',' << m << ',' << worst << ",0," << seeds << '\n';
  std::fprintf(stderr, "width^2 ratio range [%.3f, %.3f]; deviation < 0.5 in %d/%d seeds (worst %.3f)\n", lo, hi,
               below, seeds, worst);
  return 0;
}
