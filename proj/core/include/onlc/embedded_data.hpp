#pragma once

#include <string_view>

//! Shipped fixture data compiled into the library, so the defaults work
//! without an install tree.
namespace onlc::embedded {

std::string_view food_catalog_json();
std::string_view message_pool_json();
std::string_view penalty_lookup_json();

} // namespace onlc::embedded
