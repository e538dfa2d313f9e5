#pragma once

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>

namespace av {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One side of a verification trial.
struct Document {
    std::string id;
    std::string text;
    std::string author_id;
    std::string fandom_id;
};

// Author/fandom agreement taxonomy for a document pair.
enum class Subset { SA_SF, SA_DF, DA_SF, DA_DF };

inline const char* subset_name(Subset s) {
    switch (s) {
        case Subset::SA_SF: return "SA_SF";
        case Subset::SA_DF: return "SA_DF";
        case Subset::DA_SF: return "DA_SF";
        case Subset::DA_DF: return "DA_DF";
    }
    return "?";
}

inline Subset subset_of(int same_author, int same_fandom) {
    if (same_author) return same_fandom ? Subset::SA_SF : Subset::SA_DF;
    return same_fandom ? Subset::DA_SF : Subset::DA_DF;
}

// A labeled document pair. `same_author` is the target label a,
// `same_fandom` the topical label f.
struct Trial {
    std::string id;
    Document doc1;
    Document doc2;
    int same_author = 0;
    int same_fandom = 0;

    Subset subset() const { return subset_of(same_author, same_fandom); }
};

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error { using Error::Error; };
struct DocumentTooShort : Error { using Error::Error; };
struct InvalidConfig : Error { using Error::Error; };
struct InvalidHyperparam : Error { using Error::Error; };
struct InvalidThresholds : Error { using Error::Error; };
struct NotPositiveDefinite : Error { using Error::Error; };
struct InvalidEpsilon : Error { using Error::Error; };
struct EvenEnsemble : Error { using Error::Error; };
struct EmptyConfidentSet : Error { using Error::Error; };
struct SingleClass : Error { using Error::Error; };
struct NoPositives : Error { using Error::Error; };
struct CorpusTooSmall : Error { using Error::Error; };
struct QuotaInfeasible : Error { using Error::Error; };
struct MalformedRecord : Error { using Error::Error; };
struct IdMismatch : Error { using Error::Error; };
struct EmptyGrid : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };

inline void require_dims(bool ok, const std::string& what) {
    if (!ok) throw DimensionMismatch(what);
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// tanh that never rounds onto +-1, so tanh-layer outputs stay strictly
// inside the open interval even for saturated pre-activations.
inline double tanh_open(double z) {
    const double t = std::tanh(z);
    if (t >= 1.0) return std::nextafter(1.0, 0.0);
    if (t <= -1.0) return std::nextafter(-1.0, 0.0);
    return t;
}

template <class Derived>
Vec tanh_open_vec(const Eigen::MatrixBase<Derived>& z) {
    return z.unaryExpr([](double v) { return tanh_open(v); });
}

inline double softplus(double z) {
    if (z > 30.0) return z;
    return std::log1p(std::exp(z));
}

// Inverse of softplus, used to seed raw Cholesky diagonals.
inline double softplus_inverse(double y) {
    return std::log(std::expm1(y));
}

inline double clamp_prob(double p, double eps = 1e-12) {
    return std::min(1.0 - eps, std::max(eps, p));
}

}  // namespace av
