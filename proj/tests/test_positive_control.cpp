#include <gtest/gtest.h>

#include "dusa/protocol.hpp"

using namespace dusa;
using namespace dusa::harness;

// An undertrained classifier under mild noise leaves room to improve; DUSA
// should find it.
TEST(PositiveControl, DusaLiftsAWeakClassifier) {
  config::Json cfg = config::defaults();
  cfg["classifier"]["epochs"] = 1;
  cfg["classifier"]["lr"] = 3e-4;
  cfg["stream"]["corruptions"] = config::Json::array({"add_noise:1"});
  cfg["stream"]["samples"] = 4096;
  const lab::Lab lab = lab::pretrain(cfg, false);
  const StreamSpec s = stream_spec(cfg);
  const double src = run_protocol(Method::source_only, Protocol::fully, s, lab, cfg).overall;
  const double d = run_protocol(Method::dusa, Protocol::fully, s, lab, cfg).overall;
  const double u = run_protocol(Method::dusa_u, Protocol::fully, s, lab, cfg).overall;
  std::printf("source %.4f dusa %.4f dusa_u %.4f\n", src, d, u);
  EXPECT_GE(d, src + 0.02);
  EXPECT_GE(u, src + 0.02);
}
