#ifndef TRYON_TESTS_TESTUTIL_HPP
#define TRYON_TESTS_TESTUTIL_HPP

#include <cmath>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

inline int& test_failures() {
    static int n = 0;
    return n;
}

#define REQUIRE(cond)                                                                  \
    do {                                                                               \
        if (!(cond)) {                                                                 \
            std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << "  " << #cond     \
                      << "\n";                                                         \
            ++test_failures();                                                         \
        }                                                                              \
    } while (0)

#define REQUIRE_NEAR(a, b, tol)                                                        \
    do {                                                                               \
        const double va_ = static_cast<double>(a), vb_ = static_cast<double>(b);       \
        if (!(std::fabs(va_ - vb_) <= (tol))) {                                        \
            std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << "  " << #a        \
                      << " = " << va_ << " vs " << #b << " = " << vb_ << " (tol "      \
                      << (tol) << ")\n";                                               \
            ++test_failures();                                                         \
        }                                                                              \
    } while (0)

#define REQUIRE_THROWS(expr)                                                           \
    do {                                                                               \
        bool threw_ = false;                                                           \
        try {                                                                          \
            (void)(expr);                                                              \
        } catch (const std::exception&) {                                              \
            threw_ = true;                                                             \
        }                                                                              \
        if (!threw_) {                                                                 \
            std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__                      \
                      << "  expected exception: " << #expr << "\n";                    \
            ++test_failures();                                                         \
        }                                                                              \
    } while (0)

inline int test_finish(const char* name) {
    if (test_failures()) {
        std::cerr << name << ": " << test_failures() << " check(s) failed\n";
        return 1;
    }
    std::cout << name << ": ok\n";
    return 0;
}

#endif
