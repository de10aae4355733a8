#include "doctest.h"

#include "repcon/env.hpp"
