//! Compression, sum-and-forward fusion, transition matrices and the
//! partitioned update.

use super::transport::{PayloadKind, Stream, Transmission};
use super::{EngineError, FilterState};
use crate::linalg::{block_diag, vstack};
use crate::network::PrunedTree;
use crate::sfo::{CompressedInstance, SfoProblem};
use crate::signals::SampleBatch;
use crate::Mat;

/// `Ŷ_k = X_kᵀ Y_k`.
pub fn compress(x_k: &Mat, y_k: &Mat) -> Result<Mat, EngineError> {
    if x_k.nrows() != y_k.nrows() {
        return Err(EngineError::Shape(format!("X_k has {} rows, Y_k has {}", x_k.nrows(), y_k.nrows())));
    }
    Ok(x_k.transpose() * y_k)
}

/// `Γ̂_k = X_kᵀ Γ_k X_k`.
pub fn compress_gamma(x_k: &Mat, gamma_k: &Mat) -> Result<Mat, EngineError> {
    if gamma_k.shape() != (x_k.nrows(), x_k.nrows()) {
        return Err(EngineError::Shape("Γ_k does not match X_k".into()));
    }
    Ok(x_k.transpose() * (gamma_k * x_k))
}

/// One block of the local data vector at the updating node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentKind {
    /// The updating node's own channels.
    Own,
    /// `Q` compressed channels summed over a branch.
    Compressed,
    /// Raw channels of the listed nodes, in row order.
    Raw(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    /// Neighbour of the updating node the segment arrives from.
    pub branch: Option<usize>,
    pub kind: SegmentKind,
    /// First row in the local data vector.
    pub offset: usize,
    pub width: usize,
}

/// Which nodes compress and which forward raw channels, and the resulting
/// layout of the local data vector.
///
/// A node forwards raw channels when all of its children do and its own
/// channels plus those it relays are fewer than `Q`; anything else sends
/// `Q` compressed channels, absorbing raw children into its own sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionPlan {
    pub root: usize,
    pub q: usize,
    pub raw: Vec<bool>,
    /// For raw nodes, the nodes whose channels their payload carries.
    pub raw_nodes: Vec<Vec<usize>>,
    pub segments: Vec<Segment>,
}

impl FusionPlan {
    pub fn new(tree: &PrunedTree, channels: &[usize], q: usize) -> Self {
        let k = tree.node_count();
        let root = tree.root();
        let mut raw = vec![false; k];
        let mut rows = vec![0usize; k];
        let mut raw_nodes = vec![Vec::new(); k];
        for node in tree.post_order() {
            if node == root {
                continue;
            }
            let children = tree.children(node);
            let relayed: usize = children.iter().map(|&c| rows[c]).sum();
            if children.iter().all(|&c| raw[c]) && channels[node] + relayed < q {
                raw[node] = true;
                rows[node] = channels[node] + relayed;
                let mut nodes = vec![node];
                for &c in children {
                    nodes.extend_from_slice(&raw_nodes[c]);
                }
                raw_nodes[node] = nodes;
            }
        }
        let mut segments = vec![Segment { branch: None, kind: SegmentKind::Own, offset: 0, width: channels[root] }];
        let mut offset = channels[root];
        for &n in tree.branches() {
            let (kind, width) =
                if raw[n] { (SegmentKind::Raw(raw_nodes[n].clone()), rows[n]) } else { (SegmentKind::Compressed, q) };
            segments.push(Segment { branch: Some(n), kind, offset, width });
            offset += width;
        }
        Self { root, q, raw, raw_nodes, segments }
    }

    /// `M̃_q`.
    pub fn local_dimension(&self) -> usize {
        self.segments.iter().map(|s| s.width).sum()
    }

    /// Nodes forwarding raw channels, ascending.
    pub fn fallback_nodes(&self) -> Vec<usize> {
        (0..self.raw.len()).filter(|&k| self.raw[k]).collect()
    }
}

/// What a node sends to its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub from: usize,
    /// `Some(nodes)` for a raw payload, `None` for a compressed one.
    pub raw_nodes: Option<Vec<usize>>,
    pub y: Mat,
    pub v: Option<Mat>,
    /// One entry per deterministic term.
    pub terms: Vec<Mat>,
    pub gamma: Option<Mat>,
}

fn stacked_filter(state: &FilterState, nodes: &[usize]) -> Mat {
    vstack(&nodes.iter().map(|&j| state.block(j)).collect::<Vec<_>>())
}

fn log_payload(log: &mut Vec<Transmission>, p: &Payload, receiver: usize) {
    let sender = p.from;
    let (kind, rows) = match &p.raw_nodes {
        Some(_) => (PayloadKind::RawSignal, p.y.nrows()),
        None => (PayloadKind::CompressedSignal, p.y.nrows()),
    };
    log.push(Transmission { sender, receiver, kind, stream: Stream::Y, channels: rows, samples: p.y.ncols() });
    if let Some(v) = &p.v {
        log.push(Transmission { sender, receiver, kind, stream: Stream::V, channels: v.nrows(), samples: v.ncols() });
    }
    for t in &p.terms {
        log.push(Transmission {
            sender,
            receiver,
            kind: PayloadKind::Deterministic,
            stream: Stream::Control,
            channels: t.nrows(),
            samples: t.ncols(),
        });
    }
    if let Some(g) = &p.gamma {
        // Symmetric: only the upper triangle needs to travel, but the full
        // block is counted for simplicity.
        log.push(Transmission {
            sender,
            receiver,
            kind: PayloadKind::Gamma,
            stream: Stream::Control,
            channels: g.nrows(),
            samples: g.ncols(),
        });
    }
}

/// Bottom-up sum-and-forward over the pruned tree. Returns one payload per
/// branch of the root, in ascending neighbour order, and appends every
/// transmission to `log`.
pub fn fuse_and_forward(
    problem: &SfoProblem,
    tree: &PrunedTree,
    plan: &FusionPlan,
    state: &FilterState,
    batch: &SampleBatch,
    log: &mut Vec<Transmission>,
) -> Result<Vec<Payload>, EngineError> {
    let k_total = tree.node_count();
    let root = tree.root();
    let use_v = problem.uses_v();
    let v_blocks = match (use_v, &batch.v) {
        (true, Some(v)) => Some(v),
        (true, None) => return Err(EngineError::Shape("problem needs v samples".into())),
        _ => None,
    };
    let gammas = problem.gamma_blocks();
    let mut sent: Vec<Option<Payload>> = vec![None; k_total];
    for node in tree.post_order() {
        if node == root {
            continue;
        }
        let parent = tree.parent(node).ok_or(EngineError::Shape("non-root without parent".into()))?;
        let own_terms = problem.deterministic_blocks(node);
        let children: Vec<Payload> = tree
            .children(node)
            .iter()
            .map(|&c| sent[c].take().ok_or(EngineError::Shape(format!("missing payload from node {c}"))))
            .collect::<Result<_, _>>()?;
        let payload = if plan.raw[node] {
            let mut ys = vec![&batch.y[node]];
            ys.extend(children.iter().map(|c| &c.y));
            let v = v_blocks.map(|vb| {
                let mut vs = vec![&vb[node]];
                vs.extend(children.iter().map(|c| c.v.as_ref().expect("raw child carries v")));
                vstack(&vs)
            });
            let terms = (0..own_terms.len())
                .map(|t| {
                    let mut ts = vec![&own_terms[t]];
                    ts.extend(children.iter().map(|c| &c.terms[t]));
                    vstack(&ts)
                })
                .collect();
            let gamma = gammas.map(|g| {
                let mut gs = vec![g[node].clone()];
                gs.extend(children.iter().map(|c| c.gamma.clone().expect("raw child carries Γ")));
                block_diag(&gs)
            });
            Payload { from: node, raw_nodes: Some(plan.raw_nodes[node].clone()), y: vstack(&ys), v, terms, gamma }
        } else {
            let x_k = state.block(node);
            let mut y = compress(x_k, &batch.y[node])?;
            let mut v = v_blocks.map(|vb| compress(x_k, &vb[node])).transpose()?;
            let mut terms: Vec<Mat> = own_terms.iter().map(|b| x_k.transpose() * b).collect();
            let mut gamma = gammas.map(|g| compress_gamma(x_k, &g[node])).transpose()?;
            for c in &children {
                // Raw children are absorbed with their (known) filter rows.
                let xc = c.raw_nodes.as_ref().map(|nodes| stacked_filter(state, nodes));
                let lift = |m: &Mat| match &xc {
                    Some(xc) => xc.transpose() * m,
                    None => m.clone(),
                };
                y += lift(&c.y);
                if let (Some(v), Some(cv)) = (v.as_mut(), &c.v) {
                    *v += lift(cv);
                }
                for (t, ct) in terms.iter_mut().zip(&c.terms) {
                    *t += lift(ct);
                }
                if let (Some(g), Some(cg)) = (gamma.as_mut(), &c.gamma) {
                    *g += match &xc {
                        Some(xc) => xc.transpose() * (cg * xc),
                        None => cg.clone(),
                    };
                }
            }
            Payload { from: node, raw_nodes: None, y, v, terms, gamma }
        };
        log_payload(log, &payload, parent);
        sent[node] = Some(payload);
    }
    tree.branches()
        .iter()
        .map(|&n| sent[n].take().ok_or(EngineError::Shape(format!("missing payload from branch {n}"))))
        .collect()
}

/// `C_q` (`M × M̃_q`) with `ỹ_q = C_qᵀ y`, together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub matrix: Mat,
    pub segments: Vec<Segment>,
}

/// Materializes `C_q`: block-row `q` holds `I_{M_q}`, block-row `k` of a
/// compressed branch holds `X_k` in that branch's column block, and raw
/// channels map through identity blocks.
pub fn build_transition_matrix(state: &FilterState, tree: &PrunedTree, plan: &FusionPlan) -> TransitionMatrix {
    let channels = state.channels();
    let q = state.q();
    let offsets: Vec<usize> = channels
        .iter()
        .scan(0, |acc, &m| {
            let o = *acc;
            *acc += m;
            Some(o)
        })
        .collect();
    let m: usize = channels.iter().sum();
    let mut c = Mat::zeros(m, plan.local_dimension());
    for seg in &plan.segments {
        match &seg.kind {
            SegmentKind::Own => {
                let r = tree.root();
                c.view_mut((offsets[r], seg.offset), (channels[r], channels[r])).fill_with_identity();
            }
            SegmentKind::Compressed => {
                let n = seg.branch.expect("branch segment");
                for k in tree.branch_members(n) {
                    c.view_mut((offsets[k], seg.offset), (channels[k], q)).copy_from(state.block(k));
                }
            }
            SegmentKind::Raw(nodes) => {
                let mut col = seg.offset;
                for &j in nodes {
                    c.view_mut((offsets[j], col), (channels[j], channels[j])).fill_with_identity();
                    col += channels[j];
                }
            }
        }
    }
    TransitionMatrix { matrix: c, segments: plan.segments.clone() }
}

/// Data available at the updating node and the instance built from it.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalView {
    /// `ỹ_q` batch, `M̃_q × N`.
    pub y: Mat,
    pub v: Option<Mat>,
    /// `B̃_q`, one per deterministic term.
    pub terms: Vec<Mat>,
    /// Anchor `X̃_q^i`.
    pub anchor: Mat,
    pub instance: CompressedInstance,
}

/// Stacks the updating node's own data with the branch payloads and builds
/// the compressed instance. The anchor is `[X_q; I_Q; …]` with raw segments
/// carrying their current filter rows.
pub fn assemble_local_instance(
    problem: &SfoProblem,
    plan: &FusionPlan,
    state: &FilterState,
    batch: &SampleBatch,
    arrivals: &[Payload],
) -> Result<LocalView, EngineError> {
    let q = plan.root;
    let qd = state.q();
    if arrivals.len() + 1 != plan.segments.len() {
        return Err(EngineError::Shape("missing branch payloads".into()));
    }
    let mut ys = vec![&batch.y[q]];
    ys.extend(arrivals.iter().map(|p| &p.y));
    let y = vstack(&ys);
    let v = if problem.uses_v() {
        let own = batch.v.as_ref().ok_or(EngineError::Shape("problem needs v samples".into()))?;
        let mut vs = vec![&own[q]];
        for p in arrivals {
            vs.push(p.v.as_ref().ok_or(EngineError::Shape("payload lacks v".into()))?);
        }
        Some(vstack(&vs))
    } else {
        None
    };
    let own_terms = problem.deterministic_blocks(q);
    let terms: Vec<Mat> = (0..own_terms.len())
        .map(|t| {
            let mut ts = vec![&own_terms[t]];
            ts.extend(arrivals.iter().map(|p| &p.terms[t]));
            vstack(&ts)
        })
        .collect();
    let metric = match problem.gamma_blocks() {
        Some(g) => {
            let mut blocks = vec![g[q].clone()];
            for p in arrivals {
                blocks.push(p.gamma.clone().ok_or(EngineError::Shape("payload lacks Γ".into()))?);
            }
            block_diag(&blocks)
        }
        None => Mat::identity(y.nrows(), y.nrows()),
    };
    let mut anchors = vec![state.block(q).clone()];
    for (seg, p) in plan.segments[1..].iter().zip(arrivals) {
        anchors.push(match &p.raw_nodes {
            Some(nodes) => stacked_filter(state, nodes),
            None => Mat::identity(seg.width, qd),
        });
    }
    let anchor = vstack(&anchors.iter().collect::<Vec<_>>());
    let target = if problem.uses_target() {
        if batch.s.nrows() < qd {
            return Err(EngineError::Shape("batch lacks target rows".into()));
        }
        Some(batch.s.rows(0, qd).into_owned())
    } else {
        None
    };
    let instance = problem
        .instance_from_data(&y, v.as_ref(), target.as_ref(), &terms, metric, Some(anchor.clone()))
        .map_err(|source| EngineError::Solver { iteration: state.iteration(), node: q, source })?;
    Ok(LocalView { y, v, terms, anchor, instance })
}

/// Splits the local solution into `X_q` and the branch update matrices,
/// and applies `X_k ← X_k G_n` for every `k ∈ B_nq` (raw segments receive
/// their rows directly). Returns the new state and `(n, G_n)` pairs.
pub fn apply_local_solution(
    state: &FilterState,
    tree: &PrunedTree,
    plan: &FusionPlan,
    x_tilde: &Mat,
) -> (FilterState, Vec<(usize, Mat)>) {
    let channels = state.channels();
    let mut blocks: Vec<Mat> = (0..channels.len()).map(|k| state.block(k).clone()).collect();
    let mut gs = Vec::new();
    for seg in &plan.segments {
        let rows = x_tilde.rows(seg.offset, seg.width).into_owned();
        match &seg.kind {
            SegmentKind::Own => blocks[plan.root] = rows,
            SegmentKind::Compressed => {
                let n = seg.branch.expect("branch segment");
                for k in tree.branch_members(n) {
                    blocks[k] = state.block(k) * &rows;
                }
                gs.push((n, rows));
            }
            SegmentKind::Raw(nodes) => {
                let mut r = 0;
                for &j in nodes {
                    blocks[j] = rows.rows(r, channels[j]).into_owned();
                    r += channels[j];
                }
            }
        }
    }
    (FilterState::from_blocks(blocks, state.iteration() + 1), gs)
}
