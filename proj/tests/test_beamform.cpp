#include <catch2/catch_amalgamated.hpp>
#include "isac/isac.hpp"
