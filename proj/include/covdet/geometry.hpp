#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "covdet/rng.hpp"

namespace covdet {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }

/// Invertible 2D affine transformation y = m*x + t, stored as the four
/// entries of the linear part plus the translation. This is the single
/// currency for feature frames, image transformations and group elements.
struct Transform2D {
    double m11 = 1.0, m12 = 0.0;
    double m21 = 0.0, m22 = 1.0;
    double t1 = 0.0, t2 = 0.0;

    static Transform2D identity() { return {}; }
    static Transform2D translation(double tx, double ty) { return {1, 0, 0, 1, tx, ty}; }
    static Transform2D rotation(double radians) {
        const double c = std::cos(radians), s = std::sin(radians);
        return {c, -s, s, c, 0, 0};
    }
    static Transform2D scaling(double s) { return {s, 0, 0, s, 0, 0}; }
    static Transform2D linear(double a11, double a12, double a21, double a22) {
        return {a11, a12, a21, a22, 0, 0};
    }

    double det() const { return m11 * m22 - m12 * m21; }

    Vec2 apply(Vec2 p) const {
        return {m11 * p.x + m12 * p.y + t1, m21 * p.x + m22 * p.y + t2};
    }

    /// Rotation angle of the linear part, in radians.
    double angle() const { return std::atan2(m21, m11); }
};

/// Composition: the result applies `b` first, then `a` (homogeneous matrix
/// product a*b).
Transform2D compose(const Transform2D& a, const Transform2D& b);

/// Throws std::domain_error("non-invertible transform") if the linear part
/// is singular.
Transform2D inverse(const Transform2D& a);

/// Largest entrywise difference over the six coefficients.
double max_abs_diff(const Transform2D& a, const Transform2D& b);

/// Text form "m11 m12 m21 m22 t1 t2", six space-separated decimal fields.
std::string to_text(const Transform2D& t);
Transform2D transform_from_text(const std::string& text);

/// The 2D transformation groups of the detector taxonomy.
///   Trivial  identity only
///   T2       translations
///   SO2      rotations about the origin
///   SE2      rotations + translations
///   Dil2     isotropic scalings + translations
///   Sim2     similarities (rotation, isotropic scale, translation)
///   UA2      upright affinities: lower-triangular positive-diagonal linear
///            part + translation (they fix the "up" direction)
///   A2       all invertible affinities
enum class GroupId { Trivial, T2, SO2, SE2, Dil2, Sim2, UA2, A2 };

const char* group_name(GroupId g);

/// Dimension of the parametrization used by random_element.
int param_dim(GroupId g);

/// True iff `a` lies within `tol` (entrywise) of the group manifold.
bool is_member(const Transform2D& a, GroupId group, double tol);

/// Ranges used when sampling random group elements.
struct SampleBounds {
    double translation = 4.0;   // |t| per axis
    double max_angle = 3.14159265358979323846;
    double log_scale = 0.7;     // scales drawn as exp(U(-log_scale, log_scale))
    double shear = 1.2;         // off-diagonal magnitude for UA2
    double linear = 1.5;        // entry magnitude for A2
};

/// Deterministic per seed; the returned element satisfies is_member at
/// tolerance 1e-12. Sampled affinities are orientation-preserving (see A2
/// notes in the implementation).
Transform2D random_element(GroupId group, const SampleBounds& bounds, std::uint64_t seed);
Transform2D random_element(GroupId group, const SampleBounds& bounds, Rng& rng);

/// A detector class as a triple of groups: covariant with G, resolving the
/// subgroup H, leaving the complement Q undetermined.
struct DetectorSpec {
    GroupId g_group;
    GroupId h_group;
    GroupId q_group;
};

/// Named rows of the detector taxonomy, each identifying one (G, H, Q)
/// triple and the specialized residual used for its covariance constraint.
///   Point          (T2,   T2,   Trivial)  plain corner/point detector
///   RigidPoint     (SE2,  T2,   SO2)      point detector covariant to rotation
///   Blob           (Sim2, Dil2, SO2)      unoriented circle detector
///   OrientedBlob   (Sim2, Sim2, Trivial)  oriented circle detector
///   UprightAffine  (A2,   UA2,  SO2)      ellipse detector, orientation free
///   FullAffine     (A2,   A2,   Trivial)  oriented ellipse detector
///   Orientation    (SE2,  SO2,  T2)       orientation detector, position free
enum class ConstraintClass {
    Point,
    RigidPoint,
    Blob,
    OrientedBlob,
    UprightAffine,
    FullAffine,
    Orientation,
};

const char* constraint_class_name(ConstraintClass c);
DetectorSpec detector_spec(ConstraintClass c);

/// How a pair of estimated rotations encodes the relative rotation between
/// two patches (only the Orientation class is sensitive to this):
///   InverseComposition: residual compares r2^T * r1 against g's rotation.
///   DirectComposition:  residual compares r2 * r1^T against g's rotation
///                       (the form implied by the general constraint).
/// Trained orientation heads and their evaluation both default to
/// InverseComposition.
enum class RotationConvention { InverseComposition, DirectComposition };

/// Solves h2 * q = g * h1 with h2 in H and q in Q, so that the residual
/// h2 ∘ q ∘ h1⁻¹ ∘ g⁻¹ is the identity. Throws
/// std::invalid_argument("not a group member") when g or h1 violates its
/// group, and std::runtime_error("degenerate decomposition") when the
/// factorization is numerically degenerate (UprightAffine with a singular or
/// orientation-reversing product).
std::pair<Transform2D, Transform2D> decompose(const Transform2D& g, const Transform2D& h1,
                                              const DetectorSpec& spec);

/// Squared Frobenius distance of the covariance residual from the identity,
/// computed on homogeneous matrices as min over q in Q of
/// ||g*h1 - h2*q||_F^2. For classes whose complement is unique (or trivial)
/// the minimization is replaced by direct substitution; UprightAffine
/// minimizes over the rotation complement in closed form; Orientation
/// compares only the 2x2 rotation blocks per `convention`.
double constraint_residual(ConstraintClass cls, const Transform2D& h1, const Transform2D& h2,
                           const Transform2D& g,
                           RotationConvention convention = RotationConvention::InverseComposition);

}  // namespace covdet
