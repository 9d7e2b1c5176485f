#include "doctest.h"
#include "helpd/presets.h"

using namespace helpd;

TEST_CASE("preset json round trip") {
  const auto p = desk_preset(4);
  const auto back = Preset::from_json(p.to_json(), Preset{});
  CHECK(back.to_json() == p.to_json());
}

TEST_CASE("partial preset json keeps the base elsewhere") {
  const auto base = desk_preset(0);
  const auto p = Preset::from_json(
      {{"train", {{"lr", 1e-3}, {"feedback", {{"c", 0.5}}}}}, {"jobs", 2}}, base);
  CHECK(p.train.lr == 1e-3);
  CHECK(p.train.feedback.c == 0.5);
  CHECK(p.train.feedback.sigma == base.train.feedback.sigma);
  CHECK(p.train.feedback.total_steps == base.train.feedback.total_steps);
  CHECK(p.jobs == 2);
  CHECK(p.model.to_json() == base.model.to_json());
}

TEST_CASE("decode strategy from json brings its penalty flags") {
  const auto base = desk_preset(0);
  const auto vep = Preset::from_json({{"decode", {{"strategy", "vep"}}}}, base);
  CHECK(vep.decode.enable_overtrust);
  CHECK(vep.decode.enable_vision);
  CHECK(vep.decode.gamma == base.decode.gamma);
  const auto ot = Preset::from_json({{"decode", {{"strategy", "overtrust"}}}}, base);
  CHECK(ot.decode.enable_overtrust);
  CHECK_FALSE(ot.decode.enable_vision);
  const auto manual = Preset::from_json(
      {{"decode", {{"strategy", "vep"}, {"enable_vision", false}}}}, base);
  CHECK(manual.decode.enable_overtrust);
  CHECK_FALSE(manual.decode.enable_vision);
}
