#include <gtest/gtest.h>

#include <numbers>

#include "test_util.hpp"

using namespace lfdtn;

namespace {

GridSpec one_cell(int Np) {
  GridSpec g;
  g.U = g.V = g.N = g.Np = Np;
  g.H = 1;
  g.LU = g.LV = g.L = 1;
  return g;
}

// Spectrum of x cyclically shifted by (dr, dc): content moves down/right.
LocalSpectra cyclic_spectrum(const Image& x, int dr, int dc) {
  const int n = x.rows();
  LocalSpectra X(one_cell(n));
  std::vector<cplx> a(n * n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) a[r * n + c] = x(((r - dr) % n + n) % n, ((c - dc) % n + n) % n);
  fft2(n, a, X.cell(0));
  return X;
}

}  // namespace

TEST(PhaseDiff, UnitModulusAndFlags) {
  auto x = testutil::random_image(16, 16, 1);
  auto X0 = cyclic_spectrum(x, 0, 0), X1 = cyclic_spectrum(x, 1, 2);
  X1.data[5] = 0.0;
  auto pd = phase_diff(X1, X0);
  for (std::size_t i = 0; i < pd.data.size(); ++i) {
    EXPECT_NEAR(std::abs(pd.data[i]), 1.0, 1e-12);
    EXPECT_EQ(pd.flagged[i], i == 5 ? 1 : 0);
  }
  EXPECT_EQ(pd.data[5], cplx(1.0, 0.0));
  EXPECT_THROW(phase_diff(X1, LocalSpectra(one_cell(8))), ValidationError);
}

TEST(Poc, AllIntegerShifts) {
  auto x = testutil::random_image(32, 32, 2);
  auto X0 = cyclic_spectrum(x, 0, 0);
  int fails = 0;
  for (int dr = -7; dr <= 7; ++dr)
    for (int dc = -7; dc <= 7; ++dc) {
      auto p = poc(phase_diff(cyclic_spectrum(x, dr, dc), X0).cell(0), 32);
      fails += p.drow != dr || p.dcol != dc;
    }
  EXPECT_EQ(fails, 0);
}

TEST(Poc, PeakIsOneForPureShift) {
  auto x = testutil::random_image(16, 16, 3);
  auto p = poc(phase_diff(cyclic_spectrum(x, 3, -5), cyclic_spectrum(x, 0, 0)).cell(0), 16);
  EXPECT_NEAR(p.peak, 1.0, 1e-9);
}

TEST(ExtractVelocity, SignConventionOnCyclicShift) {
  auto x = testutil::random_image(23, 23, 4);
  auto X0 = cyclic_spectrum(x, 0, 0), X1 = cyclic_spectrum(x, -2, 3);
  auto vf = extract_velocity(phase_diff(X1, X0), bin_energies(X1));
  EXPECT_NEAR(vf.vx[0], 3.0, 1e-9);
  EXPECT_NEAR(vf.vy[0], -2.0, 1e-9);
  EXPECT_NEAR(vf.var_x[0], 0.0, 1e-9);
  EXPECT_EQ(vf.low_energy[0], 0);
}

TEST(ExtractVelocity, LowEnergyCell) {
  auto g = plan_grid(29, 29, 15, 7, 4);
  auto w = make_window(WindowKind::confined_gaussian, 15, 0.2);
  Image z(29, 29);
  auto X = lft(z, g, w);
  auto vf = extract_velocity(phase_diff(X, X), bin_energies(X));
  for (int l = 0; l < g.L; ++l) {
    EXPECT_EQ(vf.low_energy[l], 1);
    EXPECT_EQ(vf.vx[l], 0.0);
    EXPECT_EQ(vf.var_x[l], 1.0);
  }
  EXPECT_THROW(extract_velocity(phase_diff(X, X), std::vector<double>(3)), ValidationError);
}

TEST(Bottleneck, RoundTrip) {
  auto g = plan_grid(64, 64, 15, 7, 4);
  VelocityField vf(g);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-g.Np / 4.0, g.Np / 4.0);
  for (int l = 0; l < g.L; ++l) vf.vx[l] = u(rng), vf.vy[l] = u(rng);
  int sat = -1;
  auto back = extract_velocity(velocity_to_pd(vf, &sat), std::vector<double>(g.L * g.cell_bins(), 1.0));
  EXPECT_EQ(sat, 0);
  for (int l = 0; l < g.L; ++l) {
    EXPECT_NEAR(back.vx[l], vf.vx[l], 1e-6);
    EXPECT_NEAR(back.vy[l], vf.vy[l], 1e-6);
    EXPECT_NEAR(back.var_x[l], 0.0, 1e-9);
  }
}

TEST(Bottleneck, EvenCellSize) {
  auto g = plan_grid(25, 25, 8, 4, 2);  // Np = 12
  VelocityField vf(g);
  for (int l = 0; l < g.L; ++l) vf.vx[l] = 2.5, vf.vy[l] = -1.75;
  auto back = extract_velocity(velocity_to_pd(vf), std::vector<double>(g.L * g.cell_bins(), 1.0));
  EXPECT_NEAR(back.vx[3], 2.5, 1e-9);
  EXPECT_NEAR(back.vy[3], -1.75, 1e-9);
}

TEST(Bottleneck, Saturation) {
  auto g = plan_grid(29, 29, 15, 7, 4);
  VelocityField vf(g);
  vf.vx[0] = 100.0;
  vf.vy[1] = -12.0;
  int sat = 0;
  velocity_to_pd(vf, &sat);
  EXPECT_EQ(sat, 2);
}

TEST(PhaseAdd, IntegerShiftFidelity) {
  PredictorConfig pc;
  auto pl = Pipeline::make(pc, 64, 64);
  auto x = testutil::random_image(64, 64, 6);
  for (auto [vx, vy] : {std::pair{3, -2}, std::pair{-4, 4}, std::pair{1, 0}}) {
    VelocityField vf(pl.grid);
    std::fill(vf.vx.begin(), vf.vx.end(), vx);
    std::fill(vf.vy.begin(), vf.vy.end(), vy);
    auto pd = velocity_to_pd(vf);
    auto y = m_ilft(phase_add(lft(x, pl.grid, pl.window), pd), pl.window, pd);
    double e = 0.0;
    for (int r = 10; r < 54; ++r)
      for (int c = 10; c < 54; ++c) e = std::max(e, std::abs(y(r, c) - x(r - vy, c - vx)));
    EXPECT_LE(e, 1e-4) << vx << "," << vy;
  }
}

TEST(PhaseAdd, WrapAroundWithoutPadding) {
  // with P = 0 a 4 px shift wraps inside each cell and the result degrades
  PredictorConfig pc;
  pc.P = 0;
  auto pl = Pipeline::make(pc, 64, 64);
  auto x = testutil::random_image(64, 64, 7);
  VelocityField vf(pl.grid);
  std::fill(vf.vx.begin(), vf.vx.end(), 4.0);
  auto pd = velocity_to_pd(vf);
  auto y = ilft(phase_add(lft(x, pl.grid, pl.window), pd), pl.window);
  double e = 0.0;
  for (int r = 10; r < 54; ++r)
    for (int c = 10; c < 54; ++c) e = std::max(e, std::abs(y(r, c) - x(r, c - 4)));
  EXPECT_GT(e, 1e-2);
}

TEST(Gradients, VelocityChainMatchesFiniteDifferences) {
  // image -> lft -> phase_diff / bin_energies -> extract_velocity -> weighted sum
  auto g = plan_grid(17, 17, 9, 8, 2);
  auto w = make_window(WindowKind::gaussian, 9, 0.3);
  auto x0 = testutil::random_image(17, 17, 8);
  Image x1(17, 17);
  for (int r = 0; r < 17; ++r)
    for (int c = 0; c < 17; ++c) x1(r, c) = x0(r, std::max(c - 1, 0)) * 0.7 + 0.3 * x0(r, c);
  const auto X0 = lft(x0, g, w);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 1);
  VelocityGrad gv(g.L);
  for (int l = 0; l < g.L; ++l) gv.vx[l] = n(rng), gv.vy[l] = n(rng), gv.var_x[l] = n(rng), gv.var_y[l] = n(rng);
  auto loss = [&](const Image& im) {
    auto X1 = lft(im, g, w);
    auto vf = extract_velocity(phase_diff(X1, X0), bin_energies(X1));
    double s = 0.0;
    for (int l = 0; l < g.L; ++l)
      s += gv.vx[l] * vf.vx[l] + gv.vy[l] * vf.vy[l] + gv.var_x[l] * vf.var_x[l] + gv.var_y[l] * vf.var_y[l];
    return s;
  };
  auto X1 = lft(x1, g, w);
  auto pd = phase_diff(X1, X0);
  auto e = bin_energies(X1);
  auto vf = extract_velocity(pd, e);
  std::vector<cplx> gpd(pd.data.size());
  std::vector<double> ge(e.size());
  extract_velocity_backward(pd, e, vf, gv, gpd, ge);
  LocalSpectra gX(g);
  phase_diff_backward(X1, X0, pd, gpd, &gX, nullptr);
  bin_energies_backward(X1, ge, gX);
  auto gimg = lft_backward(gX, w);
  const double h = 1e-6;
  int bad = 0;
  for (std::size_t i = 0; i < x1.size(); ++i) {
    auto p = x1, m = x1;
    p[i] += h;
    m[i] -= h;
    const double fd = (loss(p) - loss(m)) / (2 * h);
    bad += std::abs(fd - gimg[i]) > 1e-6 + 1e-4 * std::abs(fd);
  }
  EXPECT_EQ(bad, 0);
}

TEST(Gradients, VelocityToPdMatchesFiniteDifferences) {
  auto g = plan_grid(17, 17, 9, 8, 2);
  VelocityField vf(g);
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int l = 0; l < g.L; ++l) vf.vx[l] = u(rng), vf.vy[l] = u(rng);
  std::vector<cplx> gpd(g.L * g.cell_bins());
  std::normal_distribution<double> n(0, 1);
  for (auto& v : gpd) v = {n(rng), n(rng)};
  auto loss = [&](const VelocityField& f) {
    auto pd = velocity_to_pd(f);
    double s = 0.0;
    for (std::size_t i = 0; i < gpd.size(); ++i) s += (std::conj(gpd[i]) * pd.data[i]).real();
    return s;
  };
  std::vector<double> gx, gy;
  velocity_to_pd_backward(vf, velocity_to_pd(vf), gpd, gx, gy);
  const double h = 1e-6;
  for (int l = 0; l < g.L; ++l) {
    auto p = vf, m = vf;
    p.vx[l] += h;
    m.vx[l] -= h;
    EXPECT_NEAR((loss(p) - loss(m)) / (2 * h), gx[l], 1e-5 * (1 + std::abs(gx[l])));
    p = vf, m = vf;
    p.vy[l] += h;
    m.vy[l] -= h;
    EXPECT_NEAR((loss(p) - loss(m)) / (2 * h), gy[l], 1e-5 * (1 + std::abs(gy[l])));
  }
}

TEST(Gradients, PhaseAddAdjoint) {
  auto g = plan_grid(17, 17, 9, 8, 2);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 1);
  LocalSpectra X(g), G(g);
  PhaseDiffSet pd(g);
  for (std::size_t i = 0; i < X.data.size(); ++i) {
    X.data[i] = {n(rng), n(rng)};
    G.data[i] = {n(rng), n(rng)};
    pd.data[i] = std::polar(1.0, n(rng));
  }
  LocalSpectra gx(g);
  std::vector<cplx> gp(pd.data.size());
  phase_add_backward(X, pd, G, &gx, &gp);
  // L = Re<G, X*pd>; dL/dX = conj(pd) G, dL/dpd = conj(X) G
  const std::size_t i = 17;
  const double h = 1e-6;
  auto L = [&](const LocalSpectra& a, const PhaseDiffSet& p) {
    auto y = phase_add(a, p);
    double s = 0.0;
    for (std::size_t k = 0; k < y.data.size(); ++k) s += (std::conj(G.data[k]) * y.data[k]).real();
    return s;
  };
  auto Xp = X, Xm = X;
  Xp.data[i] += cplx(0, h);
  Xm.data[i] -= cplx(0, h);
  EXPECT_NEAR((L(Xp, pd) - L(Xm, pd)) / (2 * h), gx.data[i].imag(), 1e-6);
  auto Pp = pd, Pm = pd;
  Pp.data[i] += cplx(h, 0);
  Pm.data[i] -= cplx(h, 0);
  EXPECT_NEAR((L(X, Pp) - L(X, Pm)) / (2 * h), gp[i].real(), 1e-6);
}
