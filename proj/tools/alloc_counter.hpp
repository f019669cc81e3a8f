#pragma once

#include <cstddef>

// Heap accounting for scratch-memory measurements. Linking alloc_counter.cpp
// replaces the global operator new/delete of the executable.
namespace psidiff::alloc {

void begin();           // reset counters and start counting
void end();             // stop counting
std::size_t peak_bytes();   // peak live bytes among counted allocations
std::size_t total_bytes();  // sum of counted allocation sizes
std::size_t count();        // number of counted allocations

}  // namespace psidiff::alloc
