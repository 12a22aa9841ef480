//! Small fixed-size vector/matrix/quaternion helpers shared by the geometry
//! modules. Row-major 3x3 matrices, quaternions stored as `[w, x, y, z]`.

use crate::real::Real;

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];
pub type Quat<T> = [T; 4];

pub fn add3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale3<T: Real>(a: Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3<T: Real>(a: Vec3<T>) -> T {
    dot3(a, a).sqrt()
}

pub fn normalize3<T: Real>(a: Vec3<T>) -> Option<Vec3<T>> {
    let n = norm3(a);
    if n <= T::zero() {
        None
    } else {
        Some(scale3(a, T::one() / n))
    }
}

pub fn dist3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    norm3(sub3(a, b))
}

pub fn dist3_sq<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    let d = sub3(a, b);
    dot3(d, d)
}

pub fn mat3_identity<T: Real>() -> Mat3<T> {
    let o = T::one();
    let z = T::zero();
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub fn mat3_mul_vec<T: Real>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    [dot3(m[0], v), dot3(m[1], v), dot3(m[2], v)]
}

pub fn mat3_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn mat3_transpose<T: Real>(m: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

/// Rodrigues rotation about a unit `axis` by `angle` radians.
pub fn rotation_about_axis<T: Real>(axis: Vec3<T>, angle: T) -> Mat3<T> {
    let (s, c) = angle.sin_cos();
    let t = T::one() - c;
    let [x, y, z] = axis;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Rotation matrix from a quaternion, assuming `q` is (approximately) unit.
pub fn quat_to_mat3<T: Real>(q: Quat<T>) -> Mat3<T> {
    let [w, x, y, z] = q;
    let two = T::of(2.0);
    [
        [
            T::one() - two * (y * y + z * z),
            two * (x * y - w * z),
            two * (x * z + w * y),
        ],
        [
            two * (x * y + w * z),
            T::one() - two * (x * x + z * z),
            two * (y * z - w * x),
        ],
        [
            two * (x * z - w * y),
            two * (y * z + w * x),
            T::one() - two * (x * x + y * y),
        ],
    ]
}

/// Quaternion from a rotation matrix (Shepperd's method). Returns a unit
/// quaternion with non-negative `w`.
pub fn mat3_to_quat<T: Real>(m: &Mat3<T>) -> Quat<T> {
    let trace = m[0][0] + m[1][1] + m[2][2];
    let quarter = T::of(0.25);
    let mut q;
    if trace > T::zero() {
        let s = (trace + T::one()).sqrt() * T::of(2.0);
        q = [
            quarter * s,
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
        ];
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (T::one() + m[0][0] - m[1][1] - m[2][2]).sqrt() * T::of(2.0);
        q = [
            (m[2][1] - m[1][2]) / s,
            quarter * s,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
        ];
    } else if m[1][1] > m[2][2] {
        let s = (T::one() + m[1][1] - m[0][0] - m[2][2]).sqrt() * T::of(2.0);
        q = [
            (m[0][2] - m[2][0]) / s,
            (m[0][1] + m[1][0]) / s,
            quarter * s,
            (m[1][2] + m[2][1]) / s,
        ];
    } else {
        let s = (T::one() + m[2][2] - m[0][0] - m[1][1]).sqrt() * T::of(2.0);
        q = [
            (m[1][0] - m[0][1]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            quarter * s,
        ];
    }
    if q[0] < T::zero() {
        for c in &mut q {
            *c = -*c;
        }
    }
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// Hamilton product `a * b`.
pub fn quat_mul<T: Real>(a: Quat<T>, b: Quat<T>) -> Quat<T> {
    let [aw, ax, ay, az] = a;
    let [bw, bx, by, bz] = b;
    [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]
}

pub fn quat_normalize<T: Real>(q: Quat<T>) -> Quat<T> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// An axis-aligned bounding box accumulator.
#[derive(Debug, Clone, Copy)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn empty() -> Self {
        Aabb {
            min: [T::infinity(); 3],
            max: [T::neg_infinity(); 3],
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn include(&mut self, p: Vec3<T>) {
        for i in 0..3 {
            self.min[i] = self.min[i].min(p[i]);
            self.max[i] = self.max[i].max(p[i]);
        }
    }

    pub fn include_aabb(&mut self, other: &Aabb<T>) {
        self.include(other.min);
        self.include(other.max);
    }

    pub fn center(&self) -> Vec3<T> {
        let half = T::of(0.5);
        [
            (self.min[0] + self.max[0]) * half,
            (self.min[1] + self.max[1]) * half,
            (self.min[2] + self.max[2]) * half,
        ]
    }

    pub fn size(&self) -> Vec3<T> {
        sub3(self.max, self.min)
    }

    pub fn longest_edge(&self) -> T {
        let s = self.size();
        s[0].max(s[1]).max(s[2])
    }
}
