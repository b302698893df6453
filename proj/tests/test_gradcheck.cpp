#include <sstream>

#include "doctest.h"
#include "promptrr/gradcheck.hpp"

using namespace promptrr;

TEST_CASE("a sampled audit passes and reports what it checked") {
    GradcheckOptions opt;
    opt.max_coords = 120;
    std::ostringstream console;
    const GradcheckReport rep = run_gradcheck(opt, &console);
    CHECK(rep.checked == 120);
    CHECK(rep.failed == 0);
    CHECK(rep.passed());
    CHECK(rep.worst_rel < opt.tol);
    CHECK_FALSE(rep.worst_param.empty());
    CHECK(console.str().find("worst rel") != std::string::npos);
}

TEST_CASE("the audit is deterministic for a fixed seed") {
    GradcheckOptions opt;
    opt.max_coords = 40;
    const GradcheckReport a = run_gradcheck(opt, nullptr);
    const GradcheckReport b = run_gradcheck(opt, nullptr);
    CHECK(a.worst_rel == b.worst_rel);
    CHECK(a.worst_param == b.worst_param);
}
