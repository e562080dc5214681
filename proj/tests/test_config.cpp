#include "mcsbp/config.hpp"

#include <catch_amalgamated.hpp>

#include <string>

using namespace mcsbp;
using nlohmann::json;

namespace
{
const std::string kSource = MCSBP_SOURCE_DIR;
}

TEST_CASE("shipped configs parse", "[config]")
{
    for (const char* name : {"reference_literal", "reference_supercritical", "logistic", "xlogx_pair"})
    {
        INFO(name);
        const auto cfg = load_config(kSource + "/configs/" + std::string(name) + ".json");
        CHECK_FALSE(cfg.fingerprint.empty());
        CHECK(cfg.x0.size() > 0);
    }
    const auto x = load_config(kSource + "/configs/xlogx_pair.json");
    REQUIRE(x.xlogx);
    CHECK(x.xlogx->survivor_median_floor);
    const BranchingMechanism holds(x.xlogx->holds), fails(x.xlogx->fails);
    CHECK(check_xlogx(holds).holds);
    CHECK_FALSE(check_xlogx(fails).holds);
}

TEST_CASE("mechanism json round trip", "[config]")
{
    const auto cfg = load_config(kSource + "/configs/reference_supercritical.json");
    REQUIRE(cfg.mechanism);
    const json j = mechanism_to_json(*cfg.mechanism);
    const MechanismSpec back = parse_mechanism(j);
    const BranchingMechanism a(*cfg.mechanism), b(back);
    CHECK(a.B() == b.B());
    CHECK(a.c() == b.c());
}

TEST_CASE("fingerprint ignores key order but not values", "[config]")
{
    const json a = json::parse(R"({"x": 1, "y": [1, 2]})");
    const json b = json::parse(R"({"y": [1, 2], "x": 1})");
    const json c = json::parse(R"({"y": [1, 3], "x": 1})");
    CHECK(fingerprint(a) == fingerprint(b));
    CHECK(fingerprint(a) != fingerprint(c));
    CHECK(fingerprint(a).size() == 16);
}

TEST_CASE("schema errors name the key", "[config]")
{
    const json bad = json::parse(R"({"mechanism": {"c": [1.0], "B": [[1.0]], "measures": [{"type": "banana"}]},
                                    "x0": [1.0]})");
    try
    {
        parse_config(bad);
        FAIL("expected ModelError");
    }
    catch (const ModelError& e)
    {
        CHECK(std::string(e.what()).find("banana") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config(json::parse(R"({"x0": "one"})")), std::exception);
}
