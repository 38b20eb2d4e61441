#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradient_checks.hpp"

using namespace trajflow;

namespace {

void check(const gradcheck::Outcome& o) {
  CAPTURE(o.name);
  CHECK(o.rel_err < 1e-4);
  CHECK(o.cosine > 0.999);
}

}  // namespace

TEST_CASE("toy model is small enough for exhaustive differences") {
  gradcheck::Fixture f;
  CHECK(f.model.params().scalar_count() <= 1000);
}

TEST_CASE("encoder gradient matches finite differences") { check(gradcheck::encoder()); }

TEST_CASE("decoder gradient matches finite differences") { check(gradcheck::decoder()); }

TEST_CASE("loss terms differentiate correctly through the whole model") {
  using gradcheck::Term;
  for (Term t : {Term::flow_gmm, Term::flow_l2, Term::cls, Term::rank, Term::total}) check(gradcheck::loss_term(t));
}

TEST_CASE("train_step gradient matches finite differences of l + l_s") {
  for (double sc : {0.0, 0.5, 1.0}) {
    double gap = 1.0;
    check(gradcheck::train_step(sc, &gap));
    CHECK(gap < 1e-12);
  }
}
