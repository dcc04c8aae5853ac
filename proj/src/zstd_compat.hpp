#pragma once

// Minimal declarations for the stable Zstandard C API; the build links the
// system runtime library directly (no -dev package in the image).

#include <cstddef>

extern "C" {
typedef struct ZSTD_CCtx_s ZSTD_CCtx;
ZSTD_CCtx* ZSTD_createCCtx(void);
size_t ZSTD_freeCCtx(ZSTD_CCtx* cctx);
size_t ZSTD_CCtx_setParameter(ZSTD_CCtx* cctx, int param, int value);
size_t ZSTD_compress2(ZSTD_CCtx* cctx, void* dst, size_t dstCapacity, const void* src,
                      size_t srcSize);
size_t ZSTD_decompress(void* dst, size_t dstCapacity, const void* src, size_t srcSize);
size_t ZSTD_compressBound(size_t srcSize);
unsigned ZSTD_isError(size_t code);
const char* ZSTD_getErrorName(size_t code);
unsigned long long ZSTD_getFrameContentSize(const void* src, size_t srcSize);
}

// ZSTD_cParameter values from the public header (stable since 1.4.0).
constexpr int kZstdParamCompressionLevel = 100;
constexpr int kZstdParamChecksumFlag = 201;

constexpr unsigned long long kZstdContentSizeUnknown = ~0ull;
constexpr unsigned long long kZstdContentSizeError = ~0ull - 1;
