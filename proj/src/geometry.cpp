#include "covdet/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

namespace covdet {

namespace {

constexpr double kSingularTol = 1e-12;
// Membership tolerance used for the pre-condition checks inside decompose and
// constraint_residual. Looser than the 1e-9 algebra budget so that values
// that passed through network code are not spuriously rejected.
constexpr double kMemberTol = 1e-6;

[[noreturn]] void not_a_member() { throw std::invalid_argument("not a group member"); }

double sq(double v) { return v * v; }

}  // namespace

Transform2D compose(const Transform2D& a, const Transform2D& b) {
    Transform2D r;
    r.m11 = a.m11 * b.m11 + a.m12 * b.m21;
    r.m12 = a.m11 * b.m12 + a.m12 * b.m22;
    r.m21 = a.m21 * b.m11 + a.m22 * b.m21;
    r.m22 = a.m21 * b.m12 + a.m22 * b.m22;
    r.t1 = a.m11 * b.t1 + a.m12 * b.t2 + a.t1;
    r.t2 = a.m21 * b.t1 + a.m22 * b.t2 + a.t2;
    return r;
}

Transform2D inverse(const Transform2D& a) {
    const double d = a.det();
    if (!(std::fabs(d) > kSingularTol)) throw std::domain_error("non-invertible transform");
    Transform2D r;
    r.m11 = a.m22 / d;
    r.m12 = -a.m12 / d;
    r.m21 = -a.m21 / d;
    r.m22 = a.m11 / d;
    r.t1 = -(r.m11 * a.t1 + r.m12 * a.t2);
    r.t2 = -(r.m21 * a.t1 + r.m22 * a.t2);
    return r;
}

double max_abs_diff(const Transform2D& a, const Transform2D& b) {
    double m = std::fabs(a.m11 - b.m11);
    m = std::max(m, std::fabs(a.m12 - b.m12));
    m = std::max(m, std::fabs(a.m21 - b.m21));
    m = std::max(m, std::fabs(a.m22 - b.m22));
    m = std::max(m, std::fabs(a.t1 - b.t1));
    m = std::max(m, std::fabs(a.t2 - b.t2));
    return m;
}

std::string to_text(const Transform2D& t) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g", t.m11, t.m12, t.m21,
                  t.m22, t.t1, t.t2);
    return buf;
}

Transform2D transform_from_text(const std::string& text) {
    Transform2D t;
    double* slots[6] = {&t.m11, &t.m12, &t.m21, &t.m22, &t.t1, &t.t2};
    const char* p = text.c_str();
    for (double* slot : slots) {
        char* end = nullptr;
        const double v = std::strtod(p, &end);
        if (end == p) throw std::invalid_argument("malformed transform text");
        *slot = v;
        p = end;
    }
    return t;
}

const char* group_name(GroupId g) {
    switch (g) {
        case GroupId::Trivial: return "trivial";
        case GroupId::T2: return "T2";
        case GroupId::SO2: return "SO2";
        case GroupId::SE2: return "SE2";
        case GroupId::Dil2: return "Dil2";
        case GroupId::Sim2: return "Sim2";
        case GroupId::UA2: return "UA2";
        case GroupId::A2: return "A2";
    }
    return "?";
}

int param_dim(GroupId g) {
    switch (g) {
        case GroupId::Trivial: return 0;
        case GroupId::T2: return 2;
        case GroupId::SO2: return 1;
        case GroupId::SE2: return 3;
        case GroupId::Dil2: return 3;
        case GroupId::Sim2: return 4;
        case GroupId::UA2: return 5;
        case GroupId::A2: return 6;
    }
    return -1;
}

bool is_member(const Transform2D& a, GroupId group, double tol) {
    if (!std::isfinite(a.m11) || !std::isfinite(a.m12) || !std::isfinite(a.m21) ||
        !std::isfinite(a.m22) || !std::isfinite(a.t1) || !std::isfinite(a.t2))
        return false;
    const double zero_t = std::max(std::fabs(a.t1), std::fabs(a.t2));
    // Deviations of m^T m from the identity; used for the orthogonal groups.
    const double g11 = a.m11 * a.m11 + a.m21 * a.m21 - 1.0;
    const double g12 = a.m11 * a.m12 + a.m21 * a.m22;
    const double g22 = a.m12 * a.m12 + a.m22 * a.m22 - 1.0;
    const double ortho = std::max({std::fabs(g11), std::fabs(g12), std::fabs(g22)});
    switch (group) {
        case GroupId::Trivial:
            return max_abs_diff(a, Transform2D::identity()) <= tol;
        case GroupId::T2:
            return std::fabs(a.m11 - 1) <= tol && std::fabs(a.m22 - 1) <= tol &&
                   std::fabs(a.m12) <= tol && std::fabs(a.m21) <= tol;
        case GroupId::SO2:
            return ortho <= tol && a.det() > 0 && zero_t <= tol;
        case GroupId::SE2:
            return ortho <= tol && a.det() > 0;
        case GroupId::Dil2:
            return std::fabs(a.m12) <= tol && std::fabs(a.m21) <= tol &&
                   std::fabs(a.m11 - a.m22) <= tol && a.m11 > tol;
        case GroupId::Sim2:
            return std::fabs(a.m11 - a.m22) <= tol && std::fabs(a.m12 + a.m21) <= tol &&
                   a.det() > tol;
        case GroupId::UA2:
            return std::fabs(a.m12) <= tol && a.m11 > tol && a.m22 > tol;
        case GroupId::A2:
            return std::fabs(a.det()) > tol;
    }
    return false;
}

Transform2D random_element(GroupId group, const SampleBounds& bounds, std::uint64_t seed) {
    Rng rng(seed);
    return random_element(group, bounds, rng);
}

Transform2D random_element(GroupId group, const SampleBounds& bounds, Rng& rng) {
    const auto rand_t = [&](Transform2D& t) {
        t.t1 = rng.uniform(-bounds.translation, bounds.translation);
        t.t2 = rng.uniform(-bounds.translation, bounds.translation);
    };
    switch (group) {
        case GroupId::Trivial:
            return Transform2D::identity();
        case GroupId::T2: {
            Transform2D t;
            rand_t(t);
            return t;
        }
        case GroupId::SO2:
            return Transform2D::rotation(rng.uniform(-bounds.max_angle, bounds.max_angle));
        case GroupId::SE2: {
            Transform2D t = Transform2D::rotation(rng.uniform(-bounds.max_angle, bounds.max_angle));
            rand_t(t);
            return t;
        }
        case GroupId::Dil2: {
            Transform2D t = Transform2D::scaling(
                std::exp(rng.uniform(-bounds.log_scale, bounds.log_scale)));
            rand_t(t);
            return t;
        }
        case GroupId::Sim2: {
            Transform2D t = Transform2D::rotation(rng.uniform(-bounds.max_angle, bounds.max_angle));
            const double s = std::exp(rng.uniform(-bounds.log_scale, bounds.log_scale));
            t.m11 *= s;
            t.m12 *= s;
            t.m21 *= s;
            t.m22 *= s;
            rand_t(t);
            return t;
        }
        case GroupId::UA2: {
            Transform2D t;
            t.m11 = std::exp(rng.uniform(-bounds.log_scale, bounds.log_scale));
            t.m12 = 0;
            t.m21 = rng.uniform(-bounds.shear, bounds.shear);
            t.m22 = std::exp(rng.uniform(-bounds.log_scale, bounds.log_scale));
            rand_t(t);
            return t;
        }
        case GroupId::A2: {
            // Only orientation-preserving affinities are sampled: those are the
            // elements reachable as upright-affinity x rotation products, which
            // is what the decomposition of the affine classes requires.
            Transform2D t;
            for (int tries = 0; tries < 1000; ++tries) {
                t.m11 = rng.uniform(-bounds.linear, bounds.linear);
                t.m12 = rng.uniform(-bounds.linear, bounds.linear);
                t.m21 = rng.uniform(-bounds.linear, bounds.linear);
                t.m22 = rng.uniform(-bounds.linear, bounds.linear);
                if (t.det() > 0.1) break;
            }
            rand_t(t);
            return t;
        }
    }
    return Transform2D::identity();
}

const char* constraint_class_name(ConstraintClass c) {
    switch (c) {
        case ConstraintClass::Point: return "point";
        case ConstraintClass::RigidPoint: return "rigid-point";
        case ConstraintClass::Blob: return "blob";
        case ConstraintClass::OrientedBlob: return "oriented-blob";
        case ConstraintClass::UprightAffine: return "upright-affine";
        case ConstraintClass::FullAffine: return "full-affine";
        case ConstraintClass::Orientation: return "orientation";
    }
    return "?";
}

DetectorSpec detector_spec(ConstraintClass c) {
    switch (c) {
        case ConstraintClass::Point: return {GroupId::T2, GroupId::T2, GroupId::Trivial};
        case ConstraintClass::RigidPoint: return {GroupId::SE2, GroupId::T2, GroupId::SO2};
        case ConstraintClass::Blob: return {GroupId::Sim2, GroupId::Dil2, GroupId::SO2};
        case ConstraintClass::OrientedBlob: return {GroupId::Sim2, GroupId::Sim2, GroupId::Trivial};
        case ConstraintClass::UprightAffine: return {GroupId::A2, GroupId::UA2, GroupId::SO2};
        case ConstraintClass::FullAffine: return {GroupId::A2, GroupId::A2, GroupId::Trivial};
        case ConstraintClass::Orientation: return {GroupId::SE2, GroupId::SO2, GroupId::T2};
    }
    return {GroupId::Trivial, GroupId::Trivial, GroupId::Trivial};
}

namespace {

// Factors b = lower * rot with lower lower-triangular positive-diagonal and
// rot a rotation (the QR-type factorization used by the upright-affine
// complement). The first row of b fixes the rotation; positivity of the
// diagonal fixes the sign.
void factor_lt_rotation(const Transform2D& b, Transform2D& lower, Transform2D& rot) {
    const double n1 = std::hypot(b.m11, b.m12);
    const double d = b.det();
    if (!(n1 > kSingularTol) || !(d > kSingularTol))
        throw std::runtime_error("degenerate decomposition");
    const double c = b.m11 / n1;
    const double s = -b.m12 / n1;
    rot = Transform2D::linear(c, -s, s, c);
    lower = Transform2D::linear(n1, 0.0, b.m21 * c - b.m22 * s, b.m21 * s + b.m22 * c);
}

Transform2D linear_only(const Transform2D& a) {
    return Transform2D::linear(a.m11, a.m12, a.m21, a.m22);
}

}  // namespace

std::pair<Transform2D, Transform2D> decompose(const Transform2D& g, const Transform2D& h1,
                                              const DetectorSpec& spec) {
    if (!is_member(g, spec.g_group, kMemberTol) || !is_member(h1, spec.h_group, kMemberTol))
        not_a_member();
    const Transform2D gh1 = compose(g, h1);
    switch (spec.q_group) {
        case GroupId::Trivial:
            // H = G: everything is resolved, the complement is the identity.
            return {gh1, Transform2D::identity()};
        case GroupId::SO2: {
            // Split the linear part of g*h1 into (member of H) x rotation.
            Transform2D lower, rot;
            factor_lt_rotation(linear_only(gh1), lower, rot);
            Transform2D h2 = lower;
            h2.t1 = gh1.t1;
            h2.t2 = gh1.t2;
            return {h2, rot};
        }
        case GroupId::T2: {
            // Orientation detector: the rotation block goes to h2, the whole
            // translation is absorbed by the complement.
            Transform2D h2 = linear_only(gh1);
            Transform2D q = compose(inverse(h2), Transform2D::translation(gh1.t1, gh1.t2));
            q = Transform2D::translation(q.t1, q.t2);
            return {h2, q};
        }
        default:
            throw std::invalid_argument("unsupported group triple");
    }
}

double constraint_residual(ConstraintClass cls, const Transform2D& h1, const Transform2D& h2,
                           const Transform2D& g, RotationConvention convention) {
    const DetectorSpec spec = detector_spec(cls);
    if (!is_member(g, spec.g_group, kMemberTol) || !is_member(h1, spec.h_group, kMemberTol) ||
        !is_member(h2, spec.h_group, kMemberTol))
        not_a_member();

    if (cls == ConstraintClass::Orientation) {
        // Only the rotation blocks matter; the translation is absorbed by the
        // complement. The residual of two 2x2 rotations r and g has the closed
        // form 4*(1 - cos(angle(r) - angle(g))).
        const double rel = (convention == RotationConvention::InverseComposition)
                               ? h1.angle() - h2.angle()
                               : h2.angle() - h1.angle();
        return 4.0 * (1.0 - std::cos(rel - g.angle()));
    }

    const Transform2D lhs = compose(g, h1);

    if (cls == ConstraintClass::UprightAffine) {
        // min over rotations L of ||B - M2*L||_F^2 with B the linear part of
        // g*h1; the maximizing trace term has a closed form in 2D.
        const Transform2D b = linear_only(lhs);
        const double bb = sq(b.m11) + sq(b.m12) + sq(b.m21) + sq(b.m22);
        const double mm = sq(h2.m11) + sq(h2.m12) + sq(h2.m21) + sq(h2.m22);
        // C = M2^T * B
        const double c11 = h2.m11 * b.m11 + h2.m21 * b.m21;
        const double c12 = h2.m11 * b.m12 + h2.m21 * b.m22;
        const double c21 = h2.m12 * b.m11 + h2.m22 * b.m21;
        const double c22 = h2.m12 * b.m12 + h2.m22 * b.m22;
        const double linear_term = std::max(0.0, bb + mm - 2.0 * std::hypot(c11 + c22, c21 - c12));
        return linear_term + sq(lhs.t1 - h2.t1) + sq(lhs.t2 - h2.t2);
    }

    // Unique (or trivial) complement: substitute it directly.
    Transform2D q = Transform2D::identity();
    if (cls == ConstraintClass::RigidPoint) {
        q = linear_only(g);
    } else if (cls == ConstraintClass::Blob) {
        const double s = std::sqrt(g.det());
        q = Transform2D::linear(g.m11 / s, g.m12 / s, g.m21 / s, g.m22 / s);
    }
    const Transform2D rhs = compose(h2, q);
    return sq(lhs.m11 - rhs.m11) + sq(lhs.m12 - rhs.m12) + sq(lhs.m21 - rhs.m21) +
           sq(lhs.m22 - rhs.m22) + sq(lhs.t1 - rhs.t1) + sq(lhs.t2 - rhs.t2);
}

}  // namespace covdet
