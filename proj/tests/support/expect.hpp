#pragma once

#include "doctest.h"
#include "embedsom/core.hpp"

#include <string>

// Runs `fn` and checks it throws embedsom::Error with the given code.
#define CHECK_ERROR_CODE(expr, expected_code)                                  \
    do {                                                                       \
        std::string got_code_ = "<no throw>";                                  \
        try {                                                                  \
            (void)(expr);                                                      \
        } catch (const embedsom::Error &e_) {                                  \
            got_code_ = e_.code();                                             \
        }                                                                      \
        CHECK(got_code_ == std::string(expected_code));                        \
    } while (0)
