#include <openssl/evp.h>

#include <memory>

#include "semdtm/chain.hpp"

namespace semdtm {

std::string sha256_hex(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        throw Error("sha256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string array_digest(const NdArray& a) { return sha256_hex(canonical_text(a)); }

std::string param_digest(const ParamMap& params) {
    std::string text;
    for (const auto& [name, value] : params) {
        text += "param " + name + "\n";
        text += canonical_text(value);
    }
    return sha256_hex(text);
}

}  // namespace semdtm
