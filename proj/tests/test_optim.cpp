#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "minnet/optim.hpp"
#include "support/testutil.hpp"

using namespace minnet;
using namespace minnet::testsupport;

namespace {

struct OneParam {
  std::vector<double> w, g;
  std::vector<ParamRef> refs;

  OneParam(double w0, double g0, bool decay = true) : w{w0}, g{g0} {
    refs.push_back({"p", &w, &g, decay});
  }
};

}  // namespace

TEST_CASE("plain sgd: w=1, g=1, lr=0.1 gives 0.9") {
  OneParam p(1.0, 1.0);
  OptimState s;
  s.base_lr = 0.1;
  s.momentum = 0.0;
  s.weight_decay = 0.0;
  s.init(p.refs);
  sgd_step(p.refs, s);
  CHECK(p.w[0] == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("momentum 0.9 with constant unit gradient: w1=-0.1, w2=-0.29") {
  OneParam p(0.0, 1.0);
  OptimState s;
  s.base_lr = 0.1;
  s.momentum = 0.9;
  s.weight_decay = 0.0;
  s.init(p.refs);
  sgd_step(p.refs, s);
  CHECK(p.w[0] == doctest::Approx(-0.1).epsilon(1e-12));
  sgd_step(p.refs, s);
  CHECK(p.w[0] == doctest::Approx(-0.29).epsilon(1e-12));
}

TEST_CASE("decay only: wd=0.5, w=2, lr=0.1 gives 1.9") {
  OneParam p(2.0, 0.0);
  OptimState s;
  s.base_lr = 0.1;
  s.momentum = 0.0;
  s.weight_decay = 0.5;
  s.init(p.refs);
  sgd_step(p.refs, s);
  CHECK(p.w[0] == doctest::Approx(1.9).epsilon(1e-12));
}

TEST_CASE("decay flag off skips weight decay") {
  OneParam p(2.0, 0.0, false);
  OptimState s;
  s.base_lr = 0.1;
  s.momentum = 0.0;
  s.weight_decay = 0.5;
  s.init(p.refs);
  sgd_step(p.refs, s);
  CHECK(p.w[0] == 2.0);
}

TEST_CASE("schedule milestones multiply once crossed") {
  OptimState s;
  s.base_lr = 0.2;
  s.schedule = {{30, 0.1}, {60, 0.1}};
  apply_schedule(s, 29);
  CHECK(s.lr == doctest::Approx(0.2).epsilon(1e-12));
  apply_schedule(s, 30);
  CHECK(s.lr == doctest::Approx(0.02).epsilon(1e-12));
  apply_schedule(s, 61);
  CHECK(s.lr == doctest::Approx(0.002).epsilon(1e-12));
}

TEST_CASE("lr 0 leaves parameters untouched") {
  OneParam p(1.25, 3.0);
  OptimState s;
  s.base_lr = 0.0;
  s.momentum = 0.9;
  s.weight_decay = 0.1;
  s.init(p.refs);
  for (int i = 0; i < 5; ++i) sgd_step(p.refs, s);
  CHECK(p.w[0] == 1.25);
}

TEST_CASE("one step on the quadratic loss w^2/2 shrinks |w|") {
  for (double w0 : {1.0, -0.6, 0.001}) {
    OneParam p(w0, w0);  // d/dw (w^2/2) = w
    OptimState s;
    s.base_lr = 0.5;
    s.momentum = 0.0;
    s.weight_decay = 0.0;
    s.init(p.refs);
    sgd_step(p.refs, s);
    CHECK(std::fabs(p.w[0]) < std::fabs(w0));
  }
}

TEST_CASE("mismatched registries are an invalid state") {
  OneParam p(1.0, 1.0);
  OptimState s;
  s.init(p.refs);
  OneParam q(1.0, 1.0);
  std::vector<ParamRef> two = {p.refs[0], q.refs[0]};
  CHECK_THROWS_AS(sgd_step(two, s), InvalidState);
}
