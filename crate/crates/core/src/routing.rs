//! Free-flow routing on a road graph, replacing the external routing
//! engine: fastest-route search plus the seven route features derived from
//! it (distance, duration, steps, turns, left turns, main street and the
//! fraction of travel time spent on it).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trips::EnrichedTrip;

const EARTH_RADIUS_MILES: f64 = 3958.7613;
pub const DEFAULT_SNAP_RADIUS_MILES: f64 = 0.25;

/// Turn classification thresholds, degrees of signed bearing change.
/// |change| <= 30 is straight, (30, 170) right, (-170, -30) left and
/// |change| >= 170 a u-turn. U-turns and rights count as turns but not as
/// left turns.
pub const STRAIGHT_THRESHOLD_DEG: f64 = 30.0;
pub const UTURN_THRESHOLD_DEG: f64 = 170.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

/// Great-circle distance in miles.
pub fn haversine_miles(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MILES * h.sqrt().asin()
}

/// Initial compass bearing from `a` to `b`, degrees in [0, 360).
pub fn bearing_deg(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlon = (b.lon - a.lon).to_radians();
    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    let deg = y.atan2(x).to_degrees();
    (deg + 360.0) % 360.0
}

/// Normalize a bearing difference into (-180, 180].
pub fn signed_bearing_change(from_deg: f64, to_deg: f64) -> f64 {
    let mut d = to_deg - from_deg;
    while d <= -180.0 {
        d += 360.0;
    }
    while d > 180.0 {
        d -= 360.0;
    }
    d
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: usize,
    pub to: usize,
    pub miles: f64,
    pub mph: f64,
    pub street: String,
    /// Traversal time, seconds; length / speed.
    pub secs: f64,
    pub bearing: f64,
}

/// Directed road graph. Immutable after load; adjacency is indexed both by
/// node and by street name, and routing is restricted to the largest
/// weakly-connected component.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    ids: Vec<u64>,
    coords: Vec<GeoPoint>,
    by_external_id: HashMap<u64, usize>,
    edges: Vec<GraphEdge>,
    out: Vec<Vec<u32>>,
    street_edges: BTreeMap<String, Vec<u32>>,
    in_main_component: Vec<bool>,
    exact_coords: HashMap<(u64, u64), usize>,
}

impl RoadGraph {
    /// Assemble a graph from node and edge lists. Edge endpoints must name
    /// known nodes.
    pub fn from_parts(nodes: Vec<(u64, GeoPoint)>, raw_edges: Vec<RawEdge>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::GraphLoad("no nodes".into()));
        }
        let mut by_external_id = HashMap::with_capacity(nodes.len());
        for (i, (id, _)) in nodes.iter().enumerate() {
            if by_external_id.insert(*id, i).is_some() {
                return Err(Error::GraphLoad(format!("duplicate node id {id}")));
            }
        }
        let ids: Vec<u64> = nodes.iter().map(|(id, _)| *id).collect();
        let coords: Vec<GeoPoint> = nodes.iter().map(|(_, p)| *p).collect();

        let mut edges = Vec::with_capacity(raw_edges.len());
        let mut out = vec![Vec::new(); nodes.len()];
        let mut street_edges: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for (from_id, to_id, miles, mph, street) in raw_edges {
            let from = *by_external_id.get(&from_id).ok_or_else(|| {
                Error::GraphLoad(format!("edge {from_id}->{to_id} references unknown node {from_id}"))
            })?;
            let to = *by_external_id.get(&to_id).ok_or_else(|| {
                Error::GraphLoad(format!("edge {from_id}->{to_id} references unknown node {to_id}"))
            })?;
            if miles <= 0.0 || mph <= 0.0 {
                return Err(Error::GraphLoad(format!(
                    "edge {from_id}->{to_id} has non-positive length or speed"
                )));
            }
            let idx = edges.len() as u32;
            edges.push(GraphEdge {
                from,
                to,
                miles,
                mph,
                secs: miles / mph * 3600.0,
                bearing: bearing_deg(coords[from], coords[to]),
                street: street.clone(),
            });
            out[from].push(idx);
            street_edges.entry(street).or_default().push(idx);
        }

        let in_main_component = largest_weak_component(nodes.len(), &edges);
        let mut exact_coords = HashMap::with_capacity(nodes.len());
        for (i, p) in coords.iter().enumerate() {
            if in_main_component[i] {
                exact_coords.entry((p.lon.to_bits(), p.lat.to_bits())).or_insert(i);
            }
        }

        Ok(Self { ids, coords, by_external_id, edges, out, street_edges, in_main_component, exact_coords })
    }

    pub fn n_nodes(&self) -> usize {
        self.ids.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_point(&self, node: usize) -> GeoPoint {
        self.coords[node]
    }

    pub fn node_id(&self, node: usize) -> u64 {
        self.ids[node]
    }

    pub fn node_by_id(&self, id: u64) -> Option<usize> {
        self.by_external_id.get(&id).copied()
    }

    pub fn edge(&self, idx: u32) -> &GraphEdge {
        &self.edges[idx as usize]
    }

    pub fn edges_on_street(&self, street: &str) -> &[u32] {
        self.street_edges.get(street).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn bounding_box(&self) -> (GeoPoint, GeoPoint) {
        let mut min = GeoPoint { lon: f64::INFINITY, lat: f64::INFINITY };
        let mut max = GeoPoint { lon: f64::NEG_INFINITY, lat: f64::NEG_INFINITY };
        for p in &self.coords {
            min.lon = min.lon.min(p.lon);
            min.lat = min.lat.min(p.lat);
            max.lon = max.lon.max(p.lon);
            max.lat = max.lat.max(p.lat);
        }
        (min, max)
    }

    /// Nearest routable node within `radius_miles` of the point. Exact
    /// coordinate matches short-circuit; ties go to the lowest node index.
    pub fn snap(&self, p: GeoPoint, radius_miles: f64) -> Result<usize> {
        if let Some(&node) = self.exact_coords.get(&(p.lon.to_bits(), p.lat.to_bits())) {
            return Ok(node);
        }
        let mut best: Option<(f64, usize)> = None;
        for (i, c) in self.coords.iter().enumerate() {
            if !self.in_main_component[i] {
                continue;
            }
            let d = haversine_miles(p, *c);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        match best {
            Some((d, node)) if d <= radius_miles => Ok(node),
            _ => Err(Error::Unroutable { lon: p.lon, lat: p.lat }),
        }
    }
}

fn largest_weak_component(n: usize, edges: &[GraphEdge]) -> Vec<bool> {
    let mut undirected = vec![Vec::new(); n];
    for e in edges {
        undirected[e.from].push(e.to);
        undirected[e.to].push(e.from);
    }
    let mut component = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let label = sizes.len();
        let mut stack = vec![start];
        component[start] = label;
        let mut size = 0usize;
        while let Some(u) = stack.pop() {
            size += 1;
            for &v in &undirected[u] {
                if component[v] == usize::MAX {
                    component[v] = label;
                    stack.push(v);
                }
            }
        }
        sizes.push(size);
    }
    let largest = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    component.into_iter().map(|c| c == largest).collect()
}

/// A fastest route: node path, edge path and totals. Empty when origin and
/// destination snap to the same node.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub nodes: Vec<usize>,
    pub edges: Vec<u32>,
    pub total_secs: f64,
    pub total_miles: f64,
}

impl Route {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    secs: f64,
    hops: u32,
    node: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert so the cheapest entry pops first
        other
            .secs
            .total_cmp(&self.secs)
            .then_with(|| other.hops.cmp(&self.hops))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Fastest (minimal total length/speed) route between two snapped points.
/// Label-setting shortest path over nonnegative edge durations; ties are
/// broken by fewer edges, then by predecessor node id and edge index so
/// results are reproducible.
pub fn fastest_route(graph: &RoadGraph, origin: GeoPoint, dest: GeoPoint, snap_radius_miles: f64) -> Result<Route> {
    let src = graph.snap(origin, snap_radius_miles)?;
    let dst = graph.snap(dest, snap_radius_miles)?;
    route_between_nodes(graph, src, dst)
}

pub fn route_between_nodes(graph: &RoadGraph, src: usize, dst: usize) -> Result<Route> {
    if src == dst {
        return Ok(Route { nodes: vec![src], edges: Vec::new(), total_secs: 0.0, total_miles: 0.0 });
    }
    let n = graph.n_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut hops = vec![u32::MAX; n];
    let mut pred_edge = vec![u32::MAX; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    hops[src] = 0;
    heap.push(HeapEntry { secs: 0.0, hops: 0, node: src as u32 });

    while let Some(entry) = heap.pop() {
        let u = entry.node as usize;
        if settled[u] {
            continue;
        }
        settled[u] = true;
        if u == dst {
            break;
        }
        for &edge_idx in &graph.out[u] {
            let e = graph.edge(edge_idx);
            let v = e.to;
            if settled[v] {
                continue;
            }
            let cand_secs = dist[u] + e.secs;
            let cand_hops = hops[u] + 1;
            let better = match cand_secs.total_cmp(&dist[v]) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => match cand_hops.cmp(&hops[v]) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => {
                        let cur = graph.edge(pred_edge[v]);
                        (graph.node_id(u), edge_idx) < (graph.node_id(cur.from), pred_edge[v])
                    }
                },
            };
            if better {
                dist[v] = cand_secs;
                hops[v] = cand_hops;
                pred_edge[v] = edge_idx;
                heap.push(HeapEntry { secs: cand_secs, hops: cand_hops, node: v as u32 });
            }
        }
    }

    if !dist[dst].is_finite() {
        return Err(Error::NoRoute { from: graph.node_id(src), to: graph.node_id(dst) });
    }

    let mut edges = Vec::new();
    let mut node = dst;
    while node != src {
        let e = pred_edge[node];
        edges.push(e);
        node = graph.edge(e).from;
    }
    edges.reverse();
    let mut nodes = Vec::with_capacity(edges.len() + 1);
    nodes.push(src);
    let mut total_secs = 0.0;
    let mut total_miles = 0.0;
    for &e in &edges {
        let edge = graph.edge(e);
        nodes.push(edge.to);
        total_secs += edge.secs;
        total_miles += edge.miles;
    }
    debug_assert!((total_secs - dist[dst]).abs() <= 1e-9 * total_secs.max(1.0));
    Ok(Route { nodes, edges, total_secs, total_miles })
}

/// The seven features extracted from a fastest route. Column names in the
/// batch CSV match these field names exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteFeatures {
    pub osrm_distance: f64,
    pub osrm_duration: f64,
    pub total_steps: u32,
    pub total_turns: u32,
    pub total_left: u32,
    pub main_street: String,
    pub main_street_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TurnKind {
    Straight,
    Right,
    Left,
    UTurn,
}

fn classify_turn(change_deg: f64) -> TurnKind {
    if change_deg.abs() >= UTURN_THRESHOLD_DEG {
        TurnKind::UTurn
    } else if change_deg > STRAIGHT_THRESHOLD_DEG {
        TurnKind::Right
    } else if change_deg < -STRAIGHT_THRESHOLD_DEG {
        TurnKind::Left
    } else {
        TurnKind::Straight
    }
}

/// Extract the route features. A step is a maximal run of same-street
/// edges; turns are counted at step boundaries from the bearing change
/// between the incoming and the outgoing edge. The main street is the
/// street with the largest summed duration (ties to the lexicographically
/// smallest name).
pub fn extract_route_features(graph: &RoadGraph, route: &Route) -> Result<RouteFeatures> {
    if route.is_empty() {
        return Err(Error::EmptyRoute);
    }
    let mut total_steps = 1u32;
    let mut total_turns = 0u32;
    let mut total_left = 0u32;
    let mut street_secs: BTreeMap<&str, f64> = BTreeMap::new();

    let first = graph.edge(route.edges[0]);
    *street_secs.entry(first.street.as_str()).or_insert(0.0) += first.secs;
    for pair in route.edges.windows(2) {
        let prev = graph.edge(pair[0]);
        let next = graph.edge(pair[1]);
        *street_secs.entry(next.street.as_str()).or_insert(0.0) += next.secs;
        if next.street != prev.street {
            total_steps += 1;
            match classify_turn(signed_bearing_change(prev.bearing, next.bearing)) {
                TurnKind::Straight => {}
                TurnKind::Left => {
                    total_turns += 1;
                    total_left += 1;
                }
                TurnKind::Right | TurnKind::UTurn => total_turns += 1,
            }
        }
    }

    // BTreeMap iterates name-ascending, so keeping strict maxima leaves the
    // lexicographically smallest name on ties
    let (main_street, main_secs) = street_secs
        .iter()
        .fold(("", f64::NEG_INFINITY), |acc, (name, secs)| if *secs > acc.1 { (name, *secs) } else { acc });

    Ok(RouteFeatures {
        osrm_distance: route.total_miles,
        osrm_duration: route.total_secs,
        total_steps,
        total_turns,
        total_left,
        main_street: main_street.to_string(),
        main_street_ratio: main_secs / route.total_secs,
    })
}

/// Route every trip and attach its features. Queries are read-only over
/// the immutable graph and run in parallel; the first failure (in trip
/// order) is reported.
pub fn route_trips(graph: &RoadGraph, trips: &mut [EnrichedTrip], snap_radius_miles: f64) -> Result<()> {
    let results: Vec<Result<RouteFeatures>> = trips
        .par_iter()
        .map(|t| {
            let r = &t.record;
            let route = fastest_route(
                graph,
                GeoPoint { lon: r.pickup_longitude, lat: r.pickup_latitude },
                GeoPoint { lon: r.dropoff_longitude, lat: r.dropoff_latitude },
                snap_radius_miles,
            )?;
            extract_route_features(graph, &route)
        })
        .collect();
    for (trip, result) in trips.iter_mut().zip(results) {
        trip.route = Some(result?);
    }
    Ok(())
}

/// Node CSV: `node_id,lat,lon`.
pub fn read_nodes<R: Read>(reader: R) -> Result<Vec<(u64, GeoPoint)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (id_c, lat_c, lon_c) = (col("node_id")?, col("lat")?, col("lon")?);
    let mut nodes = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let get = |i: usize| record.get(i).ok_or_else(|| Error::GraphLoad("short node row".into()));
        let id = get(id_c)?.trim().parse::<u64>().map_err(|_| Error::GraphLoad("bad node_id".into()))?;
        let lat = get(lat_c)?.trim().parse::<f64>().map_err(|_| Error::GraphLoad("bad lat".into()))?;
        let lon = get(lon_c)?.trim().parse::<f64>().map_err(|_| Error::GraphLoad("bad lon".into()))?;
        nodes.push((id, GeoPoint { lon, lat }));
    }
    Ok(nodes)
}

/// One raw edge row: from, to, length in miles, speed in mph, street.
pub type RawEdge = (u64, u64, f64, f64, String);

/// Edge CSV: `from_node,to_node,length_miles,speed_mph,street_name`.
pub fn read_edges<R: Read>(reader: R) -> Result<Vec<RawEdge>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (f_c, t_c, l_c, s_c, n_c) = (
        col("from_node")?,
        col("to_node")?,
        col("length_miles")?,
        col("speed_mph")?,
        col("street_name")?,
    );
    let mut edges = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let get = |i: usize| record.get(i).ok_or_else(|| Error::GraphLoad("short edge row".into()));
        edges.push((
            get(f_c)?.trim().parse().map_err(|_| Error::GraphLoad("bad from_node".into()))?,
            get(t_c)?.trim().parse().map_err(|_| Error::GraphLoad("bad to_node".into()))?,
            get(l_c)?.trim().parse().map_err(|_| Error::GraphLoad("bad length_miles".into()))?,
            get(s_c)?.trim().parse().map_err(|_| Error::GraphLoad("bad speed_mph".into()))?,
            get(n_c)?.to_string(),
        ));
    }
    Ok(edges)
}

/// Build a graph from node and edge CSV files.
pub fn load_graph(nodes_path: &Path, edges_path: &Path) -> Result<RoadGraph> {
    let nodes = read_nodes(std::io::BufReader::new(std::fs::File::open(nodes_path)?))?;
    let edges = read_edges(std::io::BufReader::new(std::fs::File::open(edges_path)?))?;
    RoadGraph::from_parts(nodes, edges)
}

pub fn write_nodes<W: Write>(w: W, graph: &RoadGraph) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["node_id", "lat", "lon"])?;
    for i in 0..graph.n_nodes() {
        let p = graph.node_point(i);
        wtr.write_record([graph.node_id(i).to_string(), p.lat.to_string(), p.lon.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_edges<W: Write>(w: W, graph: &RoadGraph) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["from_node", "to_node", "length_miles", "speed_mph", "street_name"])?;
    for idx in 0..graph.n_edges() {
        let e = graph.edge(idx as u32);
        wtr.write_record([
            graph.node_id(e.from).to_string(),
            graph.node_id(e.to).to_string(),
            e.miles.to_string(),
            e.mph.to_string(),
            e.street.clone(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Batch route-feature CSV keyed by trip id, with the seven feature columns.
pub fn write_route_features<W: Write>(w: W, trips: &[EnrichedTrip]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "trip_id",
        "osrm_distance",
        "osrm_duration",
        "total_steps",
        "total_turns",
        "total_left",
        "main_street",
        "main_street_ratio",
    ])?;
    for t in trips {
        let r = t.route.as_ref().ok_or(Error::MissingFeature {
            row: t.record.id,
            column: "osrm_distance".into(),
        })?;
        wtr.write_record([
            t.record.id.to_string(),
            r.osrm_distance.to_string(),
            r.osrm_duration.to_string(),
            r.total_steps.to_string(),
            r.total_turns.to_string(),
            r.total_left.to_string(),
            r.main_street.clone(),
            r.main_street_ratio.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read a batch route-feature CSV back into a map keyed by trip id.
pub fn read_route_features<R: Read>(reader: R) -> Result<HashMap<u64, RouteFeatures>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let cols = [
        col("trip_id")?,
        col("osrm_distance")?,
        col("osrm_duration")?,
        col("total_steps")?,
        col("total_turns")?,
        col("total_left")?,
        col("main_street")?,
        col("main_street_ratio")?,
    ];
    let mut out = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let get = |i: usize| record.get(cols[i]).ok_or_else(|| Error::InvalidParam("short route feature row".into()));
        let parse_f = |i: usize| -> Result<f64> {
            get(i)?.trim().parse().map_err(|_| Error::InvalidParam("bad route feature value".into()))
        };
        let parse_u = |i: usize| -> Result<u32> {
            get(i)?.trim().parse().map_err(|_| Error::InvalidParam("bad route feature count".into()))
        };
        let id: u64 = get(0)?.trim().parse().map_err(|_| Error::InvalidParam("bad trip_id".into()))?;
        out.insert(
            id,
            RouteFeatures {
                osrm_distance: parse_f(1)?,
                osrm_duration: parse_f(2)?,
                total_steps: parse_u(3)?,
                total_turns: parse_u(4)?,
                total_left: parse_u(5)?,
                main_street: get(6)?.to_string(),
                main_street_ratio: parse_f(7)?,
            },
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lon: f64, lat: f64) -> GeoPoint {
        GeoPoint { lon, lat }
    }

    /// Small L-shaped graph: A -(Avenue)-> B -(Street)-> C, bidirectional.
    fn l_graph() -> RoadGraph {
        let nodes = vec![
            (1, p(-74.0, 40.70)),
            (2, p(-74.0, 40.71)), // north of A
            (3, p(-74.01, 40.71)), // west of B
        ];
        let edges = vec![
            (1, 2, 0.7, 20.0, "Avenue 0".to_string()),
            (2, 1, 0.7, 20.0, "Avenue 0".to_string()),
            (2, 3, 0.5, 20.0, "Street 1".to_string()),
            (3, 2, 0.5, 20.0, "Street 1".to_string()),
        ];
        RoadGraph::from_parts(nodes, edges).unwrap()
    }

    #[test]
    fn two_node_graph_builds() {
        let nodes = vec![(1, p(0.0, 0.0)), (2, p(0.01, 0.0))];
        let edges = vec![(1, 2, 1.0, 20.0, "Main".to_string())];
        let g = RoadGraph::from_parts(nodes, edges).unwrap();
        assert_eq!(g.n_nodes(), 2);
        assert_eq!(g.n_edges(), 1);
        assert_eq!(g.edges_on_street("Main").len(), 1);
    }

    #[test]
    fn unknown_endpoint_is_a_load_error() {
        let nodes = vec![(1, p(0.0, 0.0))];
        let edges = vec![(1, 9, 1.0, 20.0, "Main".to_string())];
        let err = RoadGraph::from_parts(nodes, edges).unwrap_err();
        match err {
            Error::GraphLoad(msg) => assert!(msg.contains('9'), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    fn grid_graph(n: usize) -> RoadGraph {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        let spacing = 0.002;
        for r in 0..n {
            for c in 0..n {
                nodes.push(((r * n + c) as u64, p(-74.0 + c as f64 * spacing, 40.7 + r as f64 * spacing)));
            }
        }
        let idx = |r: usize, c: usize| (r * n + c) as u64;
        for r in 0..n {
            for c in 0..n {
                if c + 1 < n {
                    let len = 0.1;
                    edges.push((idx(r, c), idx(r, c + 1), len, 15.0, format!("Street {r}")));
                    edges.push((idx(r, c + 1), idx(r, c), len, 15.0, format!("Street {r}")));
                }
                if r + 1 < n {
                    let len = 0.1;
                    edges.push((idx(r, c), idx(r + 1, c), len, 15.0, format!("Avenue {c}")));
                    edges.push((idx(r + 1, c), idx(r, c), len, 15.0, format!("Avenue {c}")));
                }
            }
        }
        RoadGraph::from_parts(nodes, edges).unwrap()
    }

    #[test]
    fn ten_by_ten_grid_has_360_directed_edges() {
        let g = grid_graph(10);
        assert_eq!(g.n_nodes(), 100);
        assert_eq!(g.n_edges(), 360);
    }

    #[test]
    fn same_snap_node_yields_empty_route() {
        let g = l_graph();
        let route = fastest_route(&g, p(-74.0, 40.70), p(-74.0, 40.70), 0.25).unwrap();
        assert!(route.is_empty());
        assert_eq!(route.total_secs, 0.0);
    }

    #[test]
    fn disconnected_pair_is_no_route() {
        // two components; the larger (3 nodes) is routable, the isolated pair is not
        let nodes = vec![
            (1, p(0.0, 0.0)),
            (2, p(0.001, 0.0)),
            (3, p(0.002, 0.0)),
            (10, p(1.0, 1.0)),
            (11, p(1.001, 1.0)),
        ];
        let edges = vec![
            (1, 2, 0.1, 10.0, "A".to_string()),
            (2, 3, 0.1, 10.0, "A".to_string()),
            (10, 11, 0.1, 10.0, "B".to_string()),
        ];
        let g = RoadGraph::from_parts(nodes, edges).unwrap();
        // snapping is restricted to the main component, so the far pair is unroutable
        let err = fastest_route(&g, p(1.0, 1.0), p(0.0, 0.0), 0.25).unwrap_err();
        assert!(matches!(err, Error::Unroutable { .. }));
        // an unreachable node inside the snap radius reports "no route"
        let one_way = RoadGraph::from_parts(
            vec![(1, p(0.0, 0.0)), (2, p(0.001, 0.0))],
            vec![(2, 1, 0.1, 10.0, "A".to_string())],
        )
        .unwrap();
        let err = fastest_route(&one_way, p(0.0, 0.0), p(0.001, 0.0), 0.25).unwrap_err();
        assert!(matches!(err, Error::NoRoute { from: 1, to: 2 }));
    }

    #[test]
    fn prefers_longer_but_faster_street() {
        // direct slow street vs a longer detour on a fast avenue
        let nodes = vec![(1, p(0.0, 0.0)), (2, p(0.01, 0.0)), (3, p(0.005, 0.005))];
        let edges = vec![
            (1, 2, 1.0, 10.0, "Slow St".to_string()),   // 0.100 h
            (1, 3, 0.7, 25.0, "Fast Ave".to_string()),  // 0.028 h
            (3, 2, 0.7, 25.0, "Fast Ave".to_string()),  // 0.028 h
        ];
        let g = RoadGraph::from_parts(nodes, edges).unwrap();
        let route = fastest_route(&g, p(0.0, 0.0), p(0.01, 0.0), 0.25).unwrap();
        assert_eq!(route.nodes, vec![0, 2, 1]);
        assert!((route.total_miles - 1.4).abs() < 1e-12);
        // brute force over both paths agrees
        let brute = (1.0f64 / 10.0).min(1.4 / 25.0) * 3600.0;
        assert!((route.total_secs - brute).abs() < 1e-9);
    }

    #[test]
    fn single_street_route_features() {
        let g = l_graph();
        let route = fastest_route(&g, p(-74.0, 40.70), p(-74.0, 40.71), 0.25).unwrap();
        let f = extract_route_features(&g, &route).unwrap();
        assert_eq!(f.total_steps, 1);
        assert_eq!(f.total_turns, 0);
        assert_eq!(f.total_left, 0);
        assert_eq!(f.main_street, "Avenue 0");
        assert_eq!(f.main_street_ratio, 1.0);
    }

    #[test]
    fn l_shaped_route_counts_one_left_turn() {
        let g = l_graph();
        // A -> B heading north (bearing ~0), then B -> C heading west (~270): change -90
        let route = fastest_route(&g, p(-74.0, 40.70), p(-74.01, 40.71), 0.25).unwrap();
        let f = extract_route_features(&g, &route).unwrap();
        assert_eq!(f.total_steps, 2);
        assert_eq!(f.total_turns, 1);
        assert_eq!(f.total_left, 1);
    }

    #[test]
    fn main_street_ratio_hand_arithmetic() {
        // street A: two edges of 150 s each; street B: one edge of 100 s
        // speeds chosen so secs = miles / mph * 3600 are exact
        let nodes = vec![
            (1, p(0.0, 0.0)),
            (2, p(0.003, 0.0)),
            (3, p(0.006, 0.0)),
            (4, p(0.006, 0.003)),
        ];
        let edges = vec![
            (1, 2, 0.5, 12.0, "A".to_string()),  // 150 s
            (2, 3, 0.5, 12.0, "A".to_string()),  // 150 s
            (3, 4, 0.25, 9.0, "B".to_string()),  // 100 s
        ];
        let g = RoadGraph::from_parts(nodes, edges).unwrap();
        let route = fastest_route(&g, p(0.0, 0.0), p(0.006, 0.003), 0.25).unwrap();
        let f = extract_route_features(&g, &route).unwrap();
        assert!((f.osrm_duration - 400.0).abs() < 1e-9);
        assert_eq!(f.main_street, "A");
        assert!((f.main_street_ratio - 0.75).abs() < 1e-12);
    }

    #[test]
    fn empty_route_features_error() {
        let g = l_graph();
        let route = Route { nodes: vec![0], edges: vec![], total_secs: 0.0, total_miles: 0.0 };
        assert!(matches!(extract_route_features(&g, &route), Err(Error::EmptyRoute)));
    }

    #[test]
    fn turn_classification_thresholds() {
        assert_eq!(classify_turn(0.0), TurnKind::Straight);
        assert_eq!(classify_turn(30.0), TurnKind::Straight);
        assert_eq!(classify_turn(-30.0), TurnKind::Straight);
        assert_eq!(classify_turn(31.0), TurnKind::Right);
        assert_eq!(classify_turn(-31.0), TurnKind::Left);
        assert_eq!(classify_turn(169.9), TurnKind::Right);
        assert_eq!(classify_turn(-169.9), TurnKind::Left);
        assert_eq!(classify_turn(170.0), TurnKind::UTurn);
        assert_eq!(classify_turn(-175.0), TurnKind::UTurn);
    }

    #[test]
    fn reversed_symmetric_route_matches() {
        let g = grid_graph(5);
        let a = p(-74.0, 40.7);
        let b = p(-74.0 + 4.0 * 0.002, 40.7 + 4.0 * 0.002);
        let fwd = fastest_route(&g, a, b, 0.25).unwrap();
        let rev = fastest_route(&g, b, a, 0.25).unwrap();
        assert!((fwd.total_secs - rev.total_secs).abs() < 1e-9);
        assert!((fwd.total_miles - rev.total_miles).abs() < 1e-12);
    }

    #[test]
    fn ratio_invariant_under_uniform_speed_scaling() {
        let build = |scale: f64| {
            let nodes = vec![
                (1, p(0.0, 0.0)),
                (2, p(0.003, 0.0)),
                (3, p(0.003, 0.003)),
            ];
            let edges = vec![
                (1, 2, 0.5, 12.0 * scale, "A".to_string()),
                (2, 3, 0.25, 9.0 * scale, "B".to_string()),
            ];
            RoadGraph::from_parts(nodes, edges).unwrap()
        };
        let feat = |g: &RoadGraph| {
            let route = fastest_route(g, p(0.0, 0.0), p(0.003, 0.003), 0.25).unwrap();
            extract_route_features(g, &route).unwrap()
        };
        let base = feat(&build(1.0));
        let scaled = feat(&build(3.0));
        assert!((base.main_street_ratio - scaled.main_street_ratio).abs() < 1e-12);
    }

    #[test]
    fn graph_csv_round_trip_preserves_routing() {
        let g = grid_graph(4);
        let mut nodes_csv = Vec::new();
        let mut edges_csv = Vec::new();
        write_nodes(&mut nodes_csv, &g).unwrap();
        write_edges(&mut edges_csv, &g).unwrap();
        let reloaded = RoadGraph::from_parts(
            read_nodes(nodes_csv.as_slice()).unwrap(),
            read_edges(edges_csv.as_slice()).unwrap(),
        )
        .unwrap();
        assert_eq!(reloaded.n_nodes(), g.n_nodes());
        assert_eq!(reloaded.n_edges(), g.n_edges());
        let a = p(-74.0, 40.7);
        let b = p(-74.0 + 3.0 * 0.002, 40.7 + 3.0 * 0.002);
        let before = fastest_route(&g, a, b, 0.25).unwrap();
        let after = fastest_route(&reloaded, a, b, 0.25).unwrap();
        assert_eq!(before.total_secs, after.total_secs);
        assert_eq!(before.nodes, after.nodes);
    }

    #[test]
    fn route_feature_csv_round_trips() {
        let g = l_graph();
        let route = fastest_route(&g, p(-74.0, 40.70), p(-74.01, 40.71), 0.25).unwrap();
        let features = extract_route_features(&g, &route).unwrap();
        let record = crate::trips::TripRecord {
            id: 7,
            vendor_id: 1,
            pickup_datetime: chrono::NaiveDate::from_ymd_opt(2016, 6, 7).unwrap().and_hms_opt(7, 0, 0).unwrap(),
            dropoff_datetime: chrono::NaiveDate::from_ymd_opt(2016, 6, 7).unwrap().and_hms_opt(7, 10, 0).unwrap(),
            passenger_count: 1,
            pickup_longitude: -74.0,
            pickup_latitude: 40.70,
            dropoff_longitude: -74.01,
            dropoff_latitude: 40.71,
            trip_duration: 600.0,
            trip_distance: 1.2,
        };
        let mut trip = EnrichedTrip::new(record);
        trip.route = Some(features.clone());
        let mut buf = Vec::new();
        write_route_features(&mut buf, &[trip]).unwrap();
        let map = read_route_features(buf.as_slice()).unwrap();
        assert_eq!(map[&7], features);
    }
}
