//! Per-frame imaging loop: reference update, RSS change, projection,
//! background subtraction and tracking.

use nalgebra::{DVector, Point2};

use crate::background::BackgroundModel;
use crate::config::RtiConfig;
use crate::error::Result;
use crate::imaging::{
    build_projection, build_weight_matrix, estimate_image, rss_change, AreaMode, Image,
    ProjectionMatrix, ProjectionSolver, ReferenceMode, ReferenceState, WeightMatrix,
};
use crate::scalar::{median, Scalar};
use crate::scene::{Deployment, LinkGeometry, PairTable, PixelGrid};
use crate::selection::SelectionSet;
use crate::trace::Frame;
use crate::track::{confirmed_positions, TrackEstimate, Tracker, TrackerConfig};

/// Everything fixed for a deployment: geometry, weights and the projection.
#[derive(Debug, Clone)]
pub struct ImagingModel<T: Scalar> {
    pub config: RtiConfig<T>,
    pub table: PairTable,
    pub links: Vec<LinkGeometry<T>>,
    pub grid: PixelGrid<T>,
    pub weights: WeightMatrix<T>,
    pub projection: ProjectionMatrix<T>,
}

impl<T: Scalar> ImagingModel<T> {
    /// Builds the model on a grid of `config.p` pixels over the deployment area.
    pub fn new(
        deployment: &Deployment<T>,
        config: &RtiConfig<T>,
        area_mode: AreaMode,
        solver: ProjectionSolver,
    ) -> Result<Self> {
        config.validate()?;
        deployment.validate()?;
        let grid = PixelGrid::covering(&deployment.area, config.p);
        let links = deployment.link_geometry()?;
        let weights = build_weight_matrix(&links, &grid, config.lambda, area_mode)?;
        let projection = build_projection(&weights, config, &grid, solver)?;
        Ok(Self {
            config: *config,
            table: deployment.pair_table(),
            links,
            grid,
            weights,
            projection,
        })
    }

    /// Median over covered pixels of the intensity at pixel `q` when every
    /// link whose ellipse covers `q` changes by `attenuation` dB, i.e. the
    /// response to an idealized person standing at `q`.
    pub fn shadow_response(&self, attenuation: T) -> T {
        let pixels = self.grid.len();
        let mut covering: Vec<Vec<usize>> = vec![Vec::new(); pixels];
        for (l, row) in self.weights.support.iter().enumerate() {
            for &q in row {
                covering[q].push(l);
            }
        }
        let values: Vec<T> = covering
            .iter()
            .enumerate()
            .filter(|(_, links)| !links.is_empty())
            .map(|(q, links)| {
                links.iter().fold(T::zero(), |a, &l| a + self.projection.matrix[(q, l)]) * attenuation
            })
            .collect();
        median(&values).unwrap_or_else(T::zero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions<T> {
    pub reference_mode: ReferenceMode,
    pub background_subtraction: bool,
    pub tracker: TrackerConfig<T>,
}

impl<T: Scalar> Default for PipelineOptions<T> {
    fn default() -> Self {
        Self {
            reference_mode: ReferenceMode::Gated,
            background_subtraction: true,
            tracker: TrackerConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameOutput<T: Scalar> {
    pub image: Image<T>,
    /// Background-subtracted image (equal to `image` when subtraction is off).
    pub subtracted: DVector<T>,
    pub y: DVector<T>,
    /// Tracks matched this frame, tentative ones included.
    pub estimates: Vec<TrackEstimate<T>>,
}

impl<T: Scalar> FrameOutput<T> {
    pub fn positions(&self) -> Vec<Point2<T>> {
        confirmed_positions(&self.estimates)
    }
}

/// Stateful streaming pipeline; frames must be fed in order.
#[derive(Debug, Clone)]
pub struct Pipeline<'m, T: Scalar> {
    model: &'m ImagingModel<T>,
    options: PipelineOptions<T>,
    selection: Option<SelectionSet<T>>,
    reference: ReferenceState<T>,
    background: BackgroundModel<T>,
    tracker: Tracker<T>,
    gating: Vec<Point2<T>>,
    samples: Vec<Option<T>>,
}

impl<'m, T: Scalar> Pipeline<'m, T> {
    pub fn new(model: &'m ImagingModel<T>, options: PipelineOptions<T>) -> Self {
        let table = &model.table;
        Self {
            model,
            options,
            selection: None,
            reference: ReferenceState::new(
                table.len(),
                table.channel_count(),
                model.config.n_w(),
                &[],
                options.reference_mode,
            ),
            background: BackgroundModel::new(model.grid.len(), model.config.n_b()),
            tracker: Tracker::new(options.tracker),
            gating: Vec::new(),
            samples: vec![None; table.len()],
        }
    }

    /// Installs a new pair selection. Reference history is kept for pairs that
    /// remain selected; the background model retrains because the image
    /// statistics change with the selection.
    pub fn set_selection(&mut self, selection: SelectionSet<T>) {
        self.reference.track(&selection.selected);
        self.background.reset();
        self.selection = Some(selection);
    }

    pub fn selection(&self) -> Option<&SelectionSet<T>> {
        self.selection.as_ref()
    }

    pub fn reference(&self) -> &ReferenceState<T> {
        &self.reference
    }

    pub fn background(&self) -> &BackgroundModel<T> {
        &self.background
    }

    /// Positions gating reference updates in the next frame.
    pub fn gating_positions(&self) -> &[Point2<T>] {
        &self.gating
    }

    pub fn step(&mut self, frame: &Frame<T>) -> Result<FrameOutput<T>> {
        let model = self.model;
        frame.fill_dense(&model.table, &mut self.samples);
        self.reference
            .update(&self.samples, &self.gating, &model.links, model.config.lambda);
        let y = match &self.selection {
            Some(sel) => rss_change(&self.samples, &self.reference, sel),
            None => DVector::zeros(model.table.link_count()),
        };
        let image = estimate_image(&model.projection, &y, frame.index)?;
        let subtracted = if self.options.background_subtraction {
            self.background.update(&image.values, model.config.k_b);
            crate::background::subtract(&image.values, &self.background)
        } else {
            image.values.clone()
        };
        let estimates = self.tracker.step(&subtracted, &model.grid, frame.index);
        self.gating = self.tracker.live_positions();
        Ok(FrameOutput { image, subtracted, y, estimates })
    }
}
