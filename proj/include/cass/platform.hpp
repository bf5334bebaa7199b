#pragma once

namespace cass {

// Keeps large activation buffers on the heap instead of fresh mmap pages, so
// every training step does not page-fault its working set back in. Call once
// at startup; a no-op where the allocator has no such knob.
void configure_allocator();

}  // namespace cass
