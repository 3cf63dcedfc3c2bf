#include "config.hpp"
#include "ctrlsimp/errors.hpp"
#include "doctest.h"

using namespace ctrlsimp;
using ctrlsimp::app::RunConfig;

TEST_SUITE("config") {
  TEST_CASE("empty file keeps defaults") {
    auto rc = RunConfig::parse("");
    CHECK(rc.model == model::ModelConfig::desk());
    CHECK(rc.train.max_epochs == model::TrainSettings{}.max_epochs);
    CHECK(rc.decode.beam_size == decoder::DecodeSettings{}.beam_size);
  }

  TEST_CASE("sections, comments and presets") {
    auto rc = RunConfig::parse(
        "# profile\n"
        "[model]\n"
        "max_positions = 64   ; short inputs\n"
        "preset = paper\n"
        "copy = off\n"
        "\n"
        "[train]\n"
        "epochs=12\n"
        "learning_rate = 0.002\n"
        "seed = 99\n"
        "[decode]\n"
        "beam_size = 3\n"
        "template_grammar = false\n");
    auto paper = model::ModelConfig::paper();
    CHECK(rc.model.layers == paper.layers);
    CHECK(rc.model.hidden_dim == paper.hidden_dim);
    CHECK(rc.model.max_positions == 64);
    CHECK_FALSE(rc.model.copy_enabled);
    CHECK(rc.train.max_epochs == 12);
    CHECK(rc.train.learning_rate == doctest::Approx(0.002));
    CHECK(rc.train.seed == 99);
    CHECK(rc.decode.beam_size == 3);
    CHECK_FALSE(rc.decode.template_grammar);
    CHECK(rc.train.validation_decode.beam_size == 3);
  }

  TEST_CASE("bad files are rejected with a location") {
    auto rejects = [](const char* text, const char* fragment) {
      try {
        RunConfig::parse(text, "p.ini");
        FAIL("accepted: " << text);
      } catch (const ValidationError& e) {
        CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
      }
    };
    rejects("[model]\nlayerz = 2\n", "p.ini:2: unknown key model.layerz");
    rejects("[model]\nlayers = two\n", "expects a number");
    rejects("[model]\nlayers = 2x\n", "expects a number");
    rejects("[model]\nlayers = 2\nlayers = 3\n", "duplicate key");
    rejects("layers = 2\n", "outside a section");
    rejects("[render]\n", "unknown section");
    rejects("[model\n", "unterminated");
    rejects("[model]\nlayers\n", "expected key = value");
    rejects("[model]\npreset = huge\n", "unknown preset");
    rejects("[model]\ncopy = maybe\n", "true or false");
    rejects("[train]\nbatch_size = 0\n", "batch_size");
    rejects("[model]\nheads = 5\n", "heads");
  }
}
