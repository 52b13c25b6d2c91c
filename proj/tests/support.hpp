#pragma once

#include <string>

#include "kesten/error.hpp"

/// Name of the error kind thrown by f, or "none".
template <class F>
std::string thrown_kind(F&& f) {
  try {
    f();
  } catch (const kesten::Error& e) {
    return std::string(kesten::to_string(e.kind()));
  }
  return "none";
}
