#pragma once

#include <string>
#include <string_view>

#include "fabseg/error.hpp"

namespace fabseg {

enum class FunctionalityLabel { Aesthetic, FunctionalExternal, FunctionalInternal };

inline bool is_functional(FunctionalityLabel label) { return label != FunctionalityLabel::Aesthetic; }

inline std::string_view to_string(FunctionalityLabel label) {
  switch (label) {
    case FunctionalityLabel::Aesthetic: return "aesthetic";
    case FunctionalityLabel::FunctionalExternal: return "functional_external";
    case FunctionalityLabel::FunctionalInternal: return "functional_internal";
  }
  return "aesthetic";
}

inline FunctionalityLabel parse_label(std::string_view token) {
  if (token == "aesthetic") return FunctionalityLabel::Aesthetic;
  if (token == "functional_external") return FunctionalityLabel::FunctionalExternal;
  if (token == "functional_internal") return FunctionalityLabel::FunctionalInternal;
  throw InvalidArgument("unknown label token '" + std::string(token) + "'");
}

enum class Category { Artifact, TaskRelated };
enum class Composition { Single, Multi };

inline std::string_view to_string(Category c) { return c == Category::Artifact ? "artifact" : "task_related"; }
inline std::string_view to_string(Composition c) { return c == Composition::Single ? "single" : "multi"; }

inline Category parse_category(std::string_view token) {
  if (token == "artifact") return Category::Artifact;
  if (token == "task_related") return Category::TaskRelated;
  throw InvalidArgument("unknown category '" + std::string(token) + "'");
}

inline Composition parse_composition(std::string_view token) {
  if (token == "single") return Composition::Single;
  if (token == "multi") return Composition::Multi;
  throw InvalidArgument("unknown composition '" + std::string(token) + "'");
}

}  // namespace fabseg
