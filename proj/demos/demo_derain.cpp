// Copyright (c) 2026 the rlrtr authors.
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end walkthrough: generate a small rainy clip, split it into
// background and rain with the solver, and report recovery quality.

#include <cstdio>

int main() {
    std::puts("demo under construction");
    return 0;
}
