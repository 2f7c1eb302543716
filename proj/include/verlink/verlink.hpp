#pragma once

#include "verlink/core.hpp"
#include "verlink/io.hpp"
#include "verlink/linkage.hpp"
#include "verlink/measures.hpp"
#include "verlink/reference.hpp"
