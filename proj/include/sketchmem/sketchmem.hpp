#pragma once

#include "sketchmem/aggregate.hpp"
#include "sketchmem/binary_io.hpp"
#include "sketchmem/concepts.hpp"
#include "sketchmem/dictionary.hpp"
#include "sketchmem/errors.hpp"
#include "sketchmem/memory_index.hpp"
#include "sketchmem/random.hpp"
#include "sketchmem/record.hpp"
#include "sketchmem/recovery.hpp"
#include "sketchmem/registry.hpp"
#include "sketchmem/serialization.hpp"
#include "sketchmem/simnet.hpp"
#include "sketchmem/sketch.hpp"
#include "sketchmem/sketching.hpp"
