#pragma once

#include <map>
#include <string>

namespace badge::detail {

/// Template files keyed by path relative to templates/ ("csv/cot.txt").
const std::map<std::string, std::string>& builtin_template_files();

}  // namespace badge::detail
