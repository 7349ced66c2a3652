/* Minimal stand-ins for the SDK symbols referenced by generated proxies. */
#ifndef PADGUARD_STUB_H
#define PADGUARD_STUB_H

#include <stddef.h>
#include <stdint.h>
#include <string.h>

typedef int sgx_status_t;

#define SGX_SUCCESS 0
#define SGX_ERROR_UNEXPECTED 1
#define SGX_ERROR_INVALID_PARAMETER 2

#define SGX_CDECL
#define SGX_CAST(type, item) ((type)(item))
#define CHECK_REF_POINTER(ptr, siz) do { (void)(ptr); (void)(siz); } while (0)

void* sgx_ocalloc(size_t size);
void sgx_ocfree(void);
sgx_status_t sgx_ocall(const unsigned int index, void* ms);

#endif /* PADGUARD_STUB_H */
