#include <catch2/catch_amalgamated.hpp>

#include <deconv/model.hpp>
#include <deconv/stats.hpp>

#include <cmath>
#include <vector>

using namespace deconv;

namespace {

// Composite Simpson rule; h^4 accuracy is enough to check density
// normalization to 1e-10 when the integrand is smooth on the panel.
double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
  const double h = (b - a) / (2 * panels);
  KahanSum s;
  s.add(f(a));
  s.add(f(b));
  for (int i = 1; i < 2 * panels; ++i) s.add((i % 2 ? 4.0 : 2.0) * f(a + i * h));
  return s.value() * h / 3.0;
}

}  // namespace

TEST_CASE("kernel densities match closed forms", "[model]") {
  const NoiseKernel lap1 = NoiseKernel::laplace(1.0);
  const NoiseKernel exp1 = NoiseKernel::exponential(1.0);
  const NoiseKernel lap2 = NoiseKernel::laplace(2.0);

  REQUIRE(lap1.density(0.0) == 0.5);
  REQUIRE(exp1.density(-1.0) == 0.0);
  REQUIRE(exp1.density(0.0) == 1.0);
  REQUIRE(std::abs(lap2.density(2.0) - 0.25 * std::exp(-1.0)) <= 1e-16);
  REQUIRE(std::abs(exp1.density(2.0) - std::exp(-2.0)) <= 1e-16);

  // symmetry / one-sidedness
  for (double z : {0.1, 0.7, 3.0, 12.5}) {
    REQUIRE(lap2.density(z) == lap2.density(-z));
    REQUIRE(exp1.density(-z) == 0.0);
  }

  // log-density agrees with the density where positive
  for (double z : {0.0, 0.5, 4.0}) {
    REQUIRE(std::abs(std::exp(lap2.log_density(z)) - lap2.density(z)) <= 1e-16);
    REQUIRE(std::abs(std::exp(exp1.log_density(z)) - exp1.density(z)) <= 1e-16);
  }
  REQUIRE(std::isinf(exp1.log_density(-0.5)));
}

TEST_CASE("kernel densities integrate to one", "[model]") {
  const NoiseKernel exp2 = NoiseKernel::exponential(2.0);
  const NoiseKernel lap = NoiseKernel::laplace(0.7);
  // integrate each smooth piece separately (the kink at 0 would spoil the rate)
  const double i_exp = simpson([&](double z) { return exp2.density(z); }, 0.0, 40.0, 40000);
  const double i_lap = simpson([&](double z) { return lap.density(z); }, 0.0, 60.0, 40000) * 2.0;
  REQUIRE(std::abs(i_exp - 1.0) <= 1e-10);
  REQUIRE(std::abs(i_lap - 1.0) <= 1e-10);
}

TEST_CASE("kernel moments and scale", "[model]") {
  const NoiseKernel e = NoiseKernel::exponential(2.0);
  REQUIRE(e.mean() == 0.5);
  REQUIRE(e.variance() == 0.25);
  REQUIRE(e.scale() == 0.5);
  const NoiseKernel l = NoiseKernel::laplace(3.0);
  REQUIRE(l.mean() == 0.0);
  REQUIRE(l.variance() == 18.0);
  REQUIRE(l.scale() == 3.0);
  REQUIRE(e.name() == "exponential");
  REQUIRE(l.name() == "laplace");
}

TEST_CASE("kernel parameter validation", "[model]") {
  REQUIRE_THROWS_AS(NoiseKernel::exponential(0.0), InvalidKernel);
  REQUIRE_THROWS_AS(NoiseKernel::exponential(-1.0), InvalidKernel);
  REQUIRE_THROWS_AS(NoiseKernel::laplace(0.0), InvalidKernel);
  const double nan = std::nan("");
  REQUIRE_THROWS_AS(NoiseKernel::laplace(nan), InvalidKernel);
}

TEST_CASE("tail mass outside a window decays with the window size", "[model]") {
  const NoiseKernel lap = NoiseKernel::laplace(1.0);
  // mass of k(. - y) outside [y-w, y+w] is exp(-w) for the unit Laplace
  REQUIRE(std::abs(lap.tail_mass_outside(0.0, -5.0, 5.0) - std::exp(-5.0)) <= 1e-12);
  REQUIRE(lap.tail_mass_outside(0.0, -40.0, 40.0) <= 1e-10);
  const NoiseKernel ex = NoiseKernel::exponential(1.0);
  // one-sided: everything to the right of y, nothing to the left
  REQUIRE(std::abs(ex.tail_mass_outside(0.0, -1.0, 10.0) - std::exp(-10.0)) <= 1e-12);
  REQUIRE(std::abs(ex.tail_mass_outside(0.0, 0.5, 50.0) - (1.0 - std::exp(-0.5))) <= 1e-12);
}

TEST_CASE("discrete distribution sorts, merges and renormalizes", "[model]") {
  DiscreteDistribution f({2.0, 0.0, 1.0}, {0.2, 0.5, 0.3});
  REQUIRE(f.support() == std::vector<double>{0.0, 1.0, 2.0});
  REQUIRE(f.weights() == std::vector<double>{0.5, 0.3, 0.2});
  REQUIRE(f.min_support() == 0.0);
  REQUIRE(f.max_support() == 2.0);

  // atoms closer than the merge tolerance collapse into one
  DiscreteDistribution g({1.0, 1.0 + 1e-13}, {0.25, 0.75});
  REQUIRE(g.size() == 1);
  REQUIRE(g.weights()[0] == 1.0);

  // mild weight-sum drift is renormalized away
  DiscreteDistribution h({0.0, 1.0}, {0.5 + 2e-13, 0.5});
  double tot = 0.0;
  for (double w : h.weights()) tot += w;
  REQUIRE(std::abs(tot - 1.0) <= 1e-15);
}

TEST_CASE("discrete distribution validates its inputs", "[model]") {
  REQUIRE_THROWS_AS(DiscreteDistribution({}, {}), InvalidDistribution);
  REQUIRE_THROWS_AS(DiscreteDistribution({0.0}, {0.5, 0.5}), InvalidDistribution);
  REQUIRE_THROWS_AS(DiscreteDistribution({0.0, 1.0}, {0.5, 0.4}), InvalidDistribution);
  REQUIRE_THROWS_AS(DiscreteDistribution({0.0, 1.0}, {-0.1, 1.1}), InvalidDistribution);
  const double inf = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(DiscreteDistribution({0.0, inf}, {0.5, 0.5}), InvalidDistribution);
  REQUIRE_THROWS_AS(DiscreteDistribution({0.0, 1.0}, {0.5, std::nan("")}), InvalidDistribution);
}

TEST_CASE("discrete distribution moments and cdf", "[model]") {
  DiscreteDistribution f({0.0, 1.0, 3.0}, {0.5, 0.25, 0.25});
  REQUIRE(f.mean() == 1.0);
  // E Y^2 = 0.25 + 9*0.25 = 2.5 -> var = 1.5
  REQUIRE(std::abs(f.variance() - 1.5) <= 1e-15);
  REQUIRE(f.cdf(-0.5) == 0.0);
  REQUIRE(f.cdf(0.0) == 0.5);
  REQUIRE(f.cdf(2.0) == 0.75);
  REQUIRE(f.cdf(3.0) == 1.0);
}

TEST_CASE("sample validates and sorts", "[model]") {
  Sample s({3.0, 1.0, 2.0});
  REQUIRE(s.n() == 3);
  REQUIRE(s.data() == std::vector<double>{3.0, 1.0, 2.0});
  REQUIRE(s.sorted() == std::vector<double>{1.0, 2.0, 3.0});
  REQUIRE(s.min() == 1.0);
  REQUIRE(s.max() == 3.0);
  REQUIRE_THROWS_AS(Sample(std::vector<double>{}), InvalidSample);
  REQUIRE_THROWS_AS(Sample({1.0, std::nan("")}), InvalidSample);
}

TEST_CASE("mixture density worked examples", "[model]") {
  // point mass at 0 under unit Laplace noise
  DiscreteDistribution delta0({0.0}, {1.0});
  const NoiseKernel lap = NoiseKernel::laplace(1.0);
  REQUIRE(mixture_density(delta0, lap, 0.0) == 0.5);

  // two-point mixing under exponential noise at x = 0.5: only the atom at 0 is below x
  DiscreteDistribution f01({0.0, 1.0}, {0.5, 0.5});
  const NoiseKernel ex = NoiseKernel::exponential(1.0);
  REQUIRE(std::abs(mixture_density(f01, ex, 0.5) - 0.5 * std::exp(-0.5)) <= 1e-16);

  // same mixing under Laplace: both atoms contribute
  const double want = 0.25 * (std::exp(-0.5) + std::exp(-0.5));
  REQUIRE(std::abs(mixture_density(f01, lap, 0.5) - want) <= 1e-16);

  // MixtureDensity bundles the pair
  MixtureDensity md{f01, ex};
  REQUIRE(md(0.5) == mixture_density(f01, ex, 0.5));
}

TEST_CASE("log mixture density underflow path", "[model]") {
  DiscreteDistribution delta0({0.0}, {1.0});
  const NoiseKernel lap = NoiseKernel::laplace(1.0);
  // e^{-800} underflows to 0 in double precision, the log path must survive
  const double lp = log_mixture_density(delta0, lap, 800.0);
  REQUIRE(std::abs(lp - (-800.0 - std::log(2.0))) <= 1e-9);
  // truly zero density stays -inf
  DiscreteDistribution delta1({1.0}, {1.0});
  const NoiseKernel ex = NoiseKernel::exponential(1.0);
  REQUIRE(std::isinf(log_mixture_density(delta1, ex, 0.5)));
}

TEST_CASE("log likelihood worked examples and zero-density rejection", "[model]") {
  DiscreteDistribution delta0({0.0}, {1.0});
  const NoiseKernel lap = NoiseKernel::laplace(1.0);
  REQUIRE(std::abs(log_likelihood(delta0, lap, Sample({0.0})) - std::log(0.5)) <= 1e-15);
  REQUIRE(std::abs(log_likelihood(delta0, lap, Sample({0.0, 1.0})) -
                   (2.0 * std::log(0.5) - 1.0)) <= 1e-12);

  DiscreteDistribution delta1({1.0}, {1.0});
  const NoiseKernel ex = NoiseKernel::exponential(1.0);
  REQUIRE_THROWS_AS(log_likelihood(delta1, ex, Sample({0.5})), ZeroDensityAtObservation);
}

TEST_CASE("sorted-evaluation fast path agrees with direct evaluation", "[model]") {
  // random-ish mixing, dense sorted evaluation points, both kernels
  std::vector<double> sup, w;
  for (int j = 0; j < 25; ++j) {
    sup.push_back(-2.0 + 0.37 * j);
    w.push_back(1.0 + std::sin(1.7 * j) * 0.9);
  }
  double tot = 0.0;
  for (double v : w) tot += v;
  for (double& v : w) v /= tot;
  DiscreteDistribution f(sup, w);

  std::vector<double> xs;
  for (int i = 0; i < 400; ++i) xs.push_back(-4.0 + i * 0.032);

  for (const NoiseKernel& k :
       {NoiseKernel::exponential(0.8), NoiseKernel::laplace(1.3)}) {
    const std::vector<double> fast = mixture_density_sorted(f, k, xs);
    REQUIRE(fast.size() == xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double direct = mixture_density(f, k, xs[i]);
      REQUIRE(std::abs(fast[i] - direct) <= 1e-12 * std::max(1.0, direct));
    }
  }
}

TEST_CASE("mixture symmetry and monotone tails", "[model]") {
  // Laplace mixture around a point mass is symmetric about the atom
  DiscreteDistribution d3({3.0}, {1.0});
  const NoiseKernel lap = NoiseKernel::laplace(0.9);
  for (double u : {0.1, 0.5, 2.0}) {
    REQUIRE(mixture_density(d3, lap, 3.0 + u) == mixture_density(d3, lap, 3.0 - u));
  }
  // exponential mixtures decay monotonically past the largest support point
  DiscreteDistribution f({0.0, 1.0}, {0.5, 0.5});
  const NoiseKernel ex = NoiseKernel::exponential(1.0);
  double prev = mixture_density(f, ex, 1.0);
  for (double x = 1.25; x < 8.0; x += 0.25) {
    const double cur = mixture_density(f, ex, x);
    REQUIRE(cur < prev);
    prev = cur;
  }
}

TEST_CASE("simulate is deterministic in the seed", "[model]") {
  DiscreteDistribution f({0.0, 1.0}, {0.5, 0.5});
  const NoiseKernel lap = NoiseKernel::laplace(1.0);
  const std::vector<double> a = simulate(f, lap, 50, 123).data();
  const std::vector<double> b = simulate(f, lap, 50, 123).data();
  const std::vector<double> c = simulate(f, lap, 50, 124).data();
  REQUIRE(a == b);
  REQUIRE(a != c);
  REQUIRE(a.size() == 50);
}

TEST_CASE("simulated samples match the model moments", "[model]") {
  const std::size_t n = 200000;
  // exponential noise: E X = E Y + 1/lambda
  DiscreteDistribution f({0.0, 2.0}, {0.5, 0.5});
  const NoiseKernel ex = NoiseKernel::exponential(2.0);
  const std::vector<double> xs = simulate(f, ex, n, 77).data();
  const double m = mean_of(xs);
  const double want_mean = 1.0 + 0.5;
  const double want_var = 1.0 + 0.25;  // var Y + var Z
  REQUIRE(std::abs(m - want_mean) <= 4.0 * std::sqrt(want_var / n));
  REQUIRE(std::abs(population_variance(xs) - want_var) <= 0.05);

  // Laplace noise: symmetric around E Y
  DiscreteDistribution d({1.0}, {1.0});
  const NoiseKernel lap = NoiseKernel::laplace(1.0);
  const std::vector<double> zs = simulate(d, lap, n, 78).data();
  REQUIRE(std::abs(mean_of(zs) - 1.0) <= 4.0 * std::sqrt(2.0 / n));
  REQUIRE(std::abs(population_variance(zs) - 2.0) <= 0.08);

  // every exponential-noise draw sits above some support point
  for (double x : simulate(f, ex, 1000, 79).data()) REQUIRE(x >= 0.0);
}

TEST_CASE("simulate validates n", "[model]") {
  DiscreteDistribution f({0.0}, {1.0});
  REQUIRE_THROWS_AS(simulate(f, NoiseKernel::laplace(1.0), 0, 1), InvalidArgument);
}
