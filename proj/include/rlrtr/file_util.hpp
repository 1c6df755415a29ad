#pragma once
// Small shared file-handling helpers for the I/O headers.

#include <cstdio>

namespace rlrtr::detail {

// Aggregate RAII wrapper: closes the handle at scope exit.
struct FileCloser {
    std::FILE* f = nullptr;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

}  // namespace rlrtr::detail
