#include "font/media/synth.hpp"

#include <algorithm>
#include <cmath>

#include "font/core/errors.hpp"

namespace font::media {

namespace {

// Mouth deformation region (canonical coordinates).
constexpr double kMouthCx = 0.0, kMouthCy = 0.45;
constexpr double kRadX = 0.30, kRadY = 0.14;  // elliptical influence radii
constexpr double kBeta = 0.45;                // max extra y-scale at mouth=1
// With these radii the worst-case d(D_y)/dq_y is 1 - 1.97*kBeta > 0, so the
// forward map stays injective and the per-pixel inverse is well defined.

double sq(double v) { return v * v; }

double smoothstep01(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

// Elliptical distance from the mouth center, in influence-radius units.
double mouth_rho(double qx, double qy) {
  return std::sqrt(sq((qx - kMouthCx) / kRadX) + sq((qy - kMouthCy) / kRadY));
}

// Blend weight: 1 in the plateau (rho<=1), 0 beyond the band (rho>=2).
double falloff(double rho) {
  if (rho <= 1.0) return 1.0;
  if (rho >= 2.0) return 0.0;
  return smoothstep01(2.0 - rho);
}

double dfalloff_drho(double rho) {
  if (rho <= 1.0 || rho >= 2.0) return 0.0;
  const double u = 2.0 - rho;
  return -6.0 * u * (1.0 - u);
}

FacePoint mouth_deform(const FacePoint& q, double m) {
  const double rho = mouth_rho(q.x, q.y);
  const double a = falloff(rho);
  return {q.x, kMouthCy + (q.y - kMouthCy) * (1.0 + kBeta * m * a)};
}

// Inverts the deformation: finds q with mouth_deform(q) == u. x passes
// through; y solves a monotone scalar equation by safeguarded Newton.
FacePoint mouth_deform_inverse(const FacePoint& u, double m) {
  const double bm = kBeta * m;
  if (bm < 1e-14) return u;
  const double du = u.y - kMouthCy;
  const double rho_u = mouth_rho(u.x, u.y);
  // Deformation only expands |y - cy| (factor <= 1+kBeta), so a point this
  // far out cannot have originated inside the band.
  if (rho_u >= 2.0 * (1.0 + kBeta)) return u;

  double qy = kMouthCy + du / (1.0 + bm * falloff(rho_u));
  for (int it = 0; it < 24; ++it) {
    const double dy = qy - kMouthCy;
    const double rho = mouth_rho(u.x, qy);
    const double a = falloff(rho);
    const double f = dy * (1.0 + bm * a) - du;
    if (std::abs(f) < 1e-14) break;
    const double drho_dqy = rho > 1e-12 ? (dy / sq(kRadY)) / rho : 0.0;
    const double fp = 1.0 + bm * (a + dy * dfalloff_drho(rho) * drho_dqy);
    qy -= f / std::max(fp, 0.05);
  }
  return {u.x, qy};
}

struct Affine2 {
  // z = M q + t
  double a, b, c, d, tx, ty;

  FacePoint apply(const FacePoint& q) const {
    return {a * q.x + b * q.y + tx, c * q.x + d * q.y + ty};
  }
  FacePoint apply_inverse(const FacePoint& z) const {
    const double det = a * d - b * c;
    const double x = z.x - tx, y = z.y - ty;
    return {(d * x - b * y) / det, (-c * x + a * y) / det};
  }
};

Affine2 pose_affine(const PoseVector& p) {
  const double cy = std::cos(p.yaw), cp = std::cos(p.pitch);
  const double cr = std::cos(p.roll), sr = std::sin(p.roll);
  return {p.scale * cr * cy, -p.scale * sr * cp,
          p.scale * sr * cy, p.scale * cr * cp,
          p.tx, p.ty};
}

// ---------------------------------------------------------------------------
// Texture: a pure function of canonical coordinates plus identity parameters.

struct Rgb {
  double r, g, b;
};

Rgb mix(const Rgb& x, const Rgb& y, double w) {
  return {x.r + (y.r - x.r) * w, x.g + (y.g - x.g) * w, x.b + (y.b - x.b) * w};
}

double ellipse_mask(double qx, double qy, double cx, double cy, double rx, double ry,
                    double edge = 0.12) {
  const double e = sq((qx - cx) / rx) + sq((qy - cy) / ry);
  return smoothstep01((1.0 + edge - e) / (2.0 * edge));
}

// Face color and coverage at canonical point q.
void face_texture(const FaceIdentity& id, double qx, double qy, Rgb& color, double& alpha) {
  alpha = ellipse_mask(qx, qy, 0.0, 0.05, 0.62, 0.78, 0.06);

  const double shade = 0.88 + 0.10 * (0.3 - qy);
  Rgb col{id.skin[0] * shade, id.skin[1] * shade, id.skin[2] * shade};
  const double ripple = id.ripple_amp * std::cos(9.0 * qx + id.ripple_px) *
                        std::cos(7.0 * qy + id.ripple_py);
  col.r += ripple;
  col.g += ripple;
  col.b += ripple;

  for (double sx : {-1.0, 1.0}) {
    const double cheek = ellipse_mask(qx, qy, sx * 0.30, 0.18, 0.10, 0.10, 0.5);
    col = mix(col, {col.r + 0.08, col.g - 0.03, col.b - 0.02}, 0.5 * cheek);
    const double brow = ellipse_mask(qx, qy, sx * 0.26, -0.36, 0.13, 0.035);
    col = mix(col, {0.25, 0.18, 0.12}, brow);
    const double eye = ellipse_mask(qx, qy, sx * 0.26, -0.22, 0.11, 0.07);
    col = mix(col, {0.93, 0.93, 0.95}, eye);
    const double iris = ellipse_mask(qx, qy, sx * 0.26, -0.22, 0.045, 0.045, 0.3);
    col = mix(col, {id.iris[0], id.iris[1], id.iris[2]}, iris);
    const double pupil = ellipse_mask(qx, qy, sx * 0.26, -0.22, 0.018, 0.018, 0.5);
    col = mix(col, {0.05, 0.05, 0.06}, pupil);
  }

  const double nose = ellipse_mask(qx, qy, 0.0, 0.13, 0.055, 0.11, 0.4);
  col = mix(col, {id.skin[0] * 0.82, id.skin[1] * 0.82, id.skin[2] * 0.82}, 0.35 * nose);

  const double lips = ellipse_mask(qx, qy, kMouthCx, kMouthCy, 0.26, 0.085);
  col = mix(col, {id.lip[0], id.lip[1], id.lip[2]}, lips);
  const double cavity = ellipse_mask(qx, qy, kMouthCx, kMouthCy, 0.20, 0.050);
  col = mix(col, {0.12, 0.05, 0.06}, cavity);

  color = col;
}

Rgb background(const FaceIdentity& id, double zx, double zy) {
  const double w = std::clamp(0.5 + 0.25 * (zx + zy), 0.0, 1.0);
  Rgb c = mix({id.bg0[0], id.bg0[1], id.bg0[2]}, {id.bg1[0], id.bg1[1], id.bg1[2]}, w);
  const double stripe = 0.015 * std::cos(11.0 * zx);
  return {c.r + stripe, c.g + stripe, c.b + stripe};
}

// Smooth multi-sine trajectory in [-1,1] with seeded frequencies and phases.
struct SineMix {
  double a1, f1, p1, a2, f2, p2;

  static SineMix draw(core::Rng& rng, double fmin, double fmax) {
    SineMix s;
    s.a1 = rng.uniform(0.4, 1.0);
    s.f1 = rng.uniform(fmin, fmax);
    s.p1 = rng.uniform(0.0, 2.0 * M_PI);
    s.a2 = rng.uniform(0.4, 1.0);
    s.f2 = rng.uniform(fmin, fmax);
    s.p2 = rng.uniform(0.0, 2.0 * M_PI);
    return s;
  }
  double at(double t) const {
    return (a1 * std::sin(2.0 * M_PI * f1 * t + p1) + a2 * std::sin(2.0 * M_PI * f2 * t + p2)) /
           (a1 + a2);
  }
};

// Piecewise-linear interpolation of per-frame values at frame times k/fps.
double interp_frames(const std::vector<double>& v, double fps, double t) {
  if (v.empty()) return 0.0;
  const double x = std::clamp(t * fps, 0.0, static_cast<double>(v.size() - 1));
  const auto i = static_cast<std::size_t>(x);
  if (i + 1 >= v.size()) return v.back();
  const double f = x - static_cast<double>(i);
  return v[i] * (1.0 - f) + v[i + 1] * f;
}

}  // namespace

const std::vector<FacePoint>& canonical_landmarks() {
  // Mouth landmarks sit inside the deformation plateau (rho <= 1); all others
  // sit beyond the falloff band (rho >= 2), so local Jacobians are exact.
  static const std::vector<FacePoint> pts = {
      {-0.26, -0.22},  // left eye
      {0.26, -0.22},   // right eye
      {-0.26, -0.36},  // left brow
      {0.26, -0.36},   // right brow
      {0.0, 0.10},     // nose
      {-0.20, 0.45},   // left mouth corner
      {0.20, 0.45},    // right mouth corner
      {0.0, 0.365},    // upper lip
      {0.0, 0.535},    // lower lip
      {0.0, 0.74},     // chin
  };
  return pts;
}

FacePoint synth_forward_point(const FacePoint& q, const PoseVector& pose, double mouth) {
  return pose_affine(pose).apply(mouth_deform(q, mouth));
}

FaceIdentity sample_identity(core::Rng& rng) {
  FaceIdentity id;
  id.skin[0] = 0.86 + rng.uniform(-0.05, 0.05);
  id.skin[1] = 0.70 + rng.uniform(-0.05, 0.05);
  id.skin[2] = 0.58 + rng.uniform(-0.05, 0.05);
  id.lip[0] = 0.55 + rng.uniform(-0.05, 0.05);
  id.lip[1] = 0.20 + rng.uniform(-0.03, 0.03);
  id.lip[2] = 0.24 + rng.uniform(-0.03, 0.03);
  id.iris[0] = rng.uniform(0.15, 0.45);
  id.iris[1] = rng.uniform(0.2, 0.5);
  id.iris[2] = rng.uniform(0.3, 0.65);
  for (int c = 0; c < 3; ++c) {
    id.bg0[c] = rng.uniform(0.12, 0.30);
    id.bg1[c] = rng.uniform(0.25, 0.45);
  }
  id.ripple_px = rng.uniform(0.0, 2.0 * M_PI);
  id.ripple_py = rng.uniform(0.0, 2.0 * M_PI);
  return id;
}

Tensor render_face(const FaceIdentity& id, const PoseVector& pose, double mouth, int size) {
  const Affine2 aff = pose_affine(pose);
  Tensor img({size, size, 3});
  for (int i = 0; i < size; ++i) {
    const double zy = 2.0 * (i + 0.5) / size - 1.0;
    for (int j = 0; j < size; ++j) {
      const double zx = 2.0 * (j + 0.5) / size - 1.0;
      const FacePoint u = aff.apply_inverse({zx, zy});
      const FacePoint q = mouth_deform_inverse(u, mouth);
      Rgb col;
      double alpha;
      face_texture(id, q.x, q.y, col, alpha);
      const Rgb bg = background(id, zx, zy);
      const Rgb out = mix(bg, col, alpha);
      img.at(i, j, 0) = std::clamp(out.r, 0.0, 1.0);
      img.at(i, j, 1) = std::clamp(out.g, 0.0, 1.0);
      img.at(i, j, 2) = std::clamp(out.b, 0.0, 1.0);
    }
  }
  return img;
}

SyntheticClip synth_generate(const SynthSpec& spec, int seed) {
  if (spec.frames <= 0) throw EmptyInputError("synth spec has zero length");
  if (spec.size < 8) throw RangeError("synth size must be at least 8");
  const int nkp = spec.n_keypoints;
  const auto& landmarks = canonical_landmarks();
  if (nkp < 1 || nkp > static_cast<int>(landmarks.size()))
    throw ConfigError("n_keypoints must be in [1," + std::to_string(landmarks.size()) + "]");
  if (!spec.pose_program.empty() &&
      spec.pose_program.size() != static_cast<std::size_t>(spec.frames))
    throw LengthError("pose program length != frame count");
  if (!spec.mouth_program.empty() &&
      spec.mouth_program.size() != static_cast<std::size_t>(spec.frames))
    throw LengthError("mouth program length != frame count");

  core::Rng rng(static_cast<std::uint64_t>(seed));
  const FaceIdentity id = sample_identity(rng);

  // Head pose wanders slowly; yaw gets a random per-clip sign so its
  // direction is unpredictable from audio alone.
  const double yaw_sign = rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
  const SineMix yaw_tr = SineMix::draw(rng, 0.2, 0.9);
  const SineMix pitch_tr = SineMix::draw(rng, 0.2, 0.9);
  const SineMix roll_tr = SineMix::draw(rng, 0.2, 0.9);
  const SineMix ls_tr = SineMix::draw(rng, 0.2, 0.9);
  const SineMix tx_tr = SineMix::draw(rng, 0.2, 0.9);
  const SineMix ty_tr = SineMix::draw(rng, 0.2, 0.9);
  // Mouth moves at syllable rate.
  const SineMix m1 = SineMix::draw(rng, 1.5, 4.0);
  const SineMix m2 = SineMix::draw(rng, 1.5, 4.0);

  SyntheticClip clip;
  clip.seed = seed;
  clip.frames.fps = spec.fps;

  std::vector<double> mouth(spec.frames);
  clip.poses.resize(spec.frames);
  for (int k = 0; k < spec.frames; ++k) {
    const double t = k / spec.fps;
    if (!spec.pose_program.empty()) {
      clip.poses[k] = spec.pose_program[k];
    } else {
      PoseVector p;
      p.yaw = yaw_sign * spec.yaw_amp * yaw_tr.at(t);
      p.pitch = spec.pitch_amp * pitch_tr.at(t);
      p.roll = spec.roll_amp * roll_tr.at(t);
      p.scale = std::exp(spec.scale_amp * ls_tr.at(t));
      p.tx = spec.trans_amp * tx_tr.at(t);
      p.ty = spec.trans_amp * ty_tr.at(t);
      clip.poses[k] = p;
    }
    clip.poses[k].validate();
    mouth[k] = spec.mouth_program.empty()
                   ? 0.5 + 0.5 * std::tanh(2.2 * (0.6 * m1.at(t) + 0.4 * m2.at(t)))
                   : std::clamp(spec.mouth_program[k], 0.0, 1.0);
  }

  for (int k = 0; k < spec.frames; ++k) {
    clip.frames.frames.push_back(render_face(id, clip.poses[k], mouth[k], spec.size));

    const Affine2 aff = pose_affine(clip.poses[k]);
    const double ym = 1.0 + kBeta * mouth[k];
    Tensor kp({nkp, 2});
    Tensor jac({nkp, 2, 2});
    for (int n = 0; n < nkp; ++n) {
      const FacePoint& q = landmarks[n];
      const double rho = mouth_rho(q.x, q.y);
      const bool in_plateau = rho <= 1.0;
      const FacePoint z = aff.apply(mouth_deform(q, mouth[k]));
      kp.at(n, 0) = z.x;
      kp.at(n, 1) = z.y;
      // J = L * diag(1, local y-scale); exact in the plateau and outside the
      // falloff band, which is where every landmark lives.
      const double s = in_plateau ? ym : 1.0;
      jac.at(n, 0, 0) = aff.a;
      jac.at(n, 0, 1) = aff.b * s;
      jac.at(n, 1, 0) = aff.c;
      jac.at(n, 1, 1) = aff.d * s;
    }
    clip.gt_keypoints.push_back(std::move(kp));
    clip.gt_jacobians.push_back(std::move(jac));
  }

  // Audio features: Chebyshev ladder of the mouth trajectory evaluated at the
  // same window centers the MFCC pipeline uses, so row r carries T_r(2m-1)
  // scaled by 1/(1+r). Row 1 is exactly 2m-1: the correspondence is
  // invertible by construction.
  for (int k = 0; k < spec.frames; ++k) {
    AudioFeature feat;
    feat.frame_index = k;
    feat.coeffs = Tensor({28, 12});
    for (int c = 0; c < 12; ++c) {
      const double tau = k / spec.fps + (c - 3.5) * 0.01;
      const double m = interp_frames(mouth, spec.fps, tau);
      const double x = 2.0 * m - 1.0;
      double tprev = 1.0, tcur = x;
      for (int r = 0; r < 28; ++r) {
        const double val = r == 0 ? 1.0 : tcur;
        feat.coeffs.at(r, c) = val / (1.0 + r);
        if (r >= 1) {
          const double tnext = 2.0 * x * tcur - tprev;
          tprev = tcur;
          tcur = tnext;
        }
      }
    }
    clip.audio_features.push_back(std::move(feat));
  }

  clip.mouth = mouth;

  // Companion waveform: a 440 Hz tone amplitude-modulated by the mouth curve
  // plus a faint hum, so file-based inference has a real 16 kHz input whose
  // energy tracks the mouth.
  const std::size_t n_samples = static_cast<std::size_t>(spec.frames) * 640;
  clip.audio_samples.resize(n_samples);
  for (std::size_t n = 0; n < n_samples; ++n) {
    const double t = static_cast<double>(n) / 16000.0;
    const double m = interp_frames(mouth, spec.fps, t);
    clip.audio_samples[n] = (0.10 + 0.80 * m) * 0.6 * std::sin(2.0 * M_PI * 440.0 * t) +
                            0.05 * std::sin(2.0 * M_PI * 90.0 * t);
  }
  return clip;
}

}  // namespace font::media
