#pragma once

#include <string_view>

// Text assets compiled into the library (see cmake/EmbedAssets.cmake).
namespace esgkb::assets {

std::string_view taxonomy_tsv();

// Prompt template by file stem, e.g. "reorder.v1". Empty when unknown.
std::string_view prompt(std::string_view name);

}  // namespace esgkb::assets
