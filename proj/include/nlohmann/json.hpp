// Maps the canonical include path onto the vendored single header.
#pragma once
#include "../../vendor/json.hpp"
